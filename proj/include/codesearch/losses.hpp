#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "codesearch/common.hpp"

namespace codesearch {

template <typename S>
struct ContrastiveLoss {
  S loss = 0;
  Mat<S> d_nl;  // ∂loss/∂nl_embeddings, B × d
  Mat<S> d_pl;  // ∂loss/∂pl_embeddings, B × d
};

/// In-batch contrastive loss, NL→PL direction:
///   (1/B) Σᵢ −log softmax_j(xᵢ·yⱼ / σ)[i]
/// Rows of `nl` and `pl` are the paired embeddings. With `symmetric` the
/// PL→NL term is added and both are averaged.
template <typename S>
ContrastiveLoss<S> info_nce_loss(const Mat<S>& nl, const Mat<S>& pl, S temperature, bool symmetric = false) {
  const Eigen::Index B = nl.rows();
  if (B < 2) throw std::invalid_argument("info_nce_loss: need at least 2 pairs in the batch");
  if (pl.rows() != B || pl.cols() != nl.cols()) throw std::invalid_argument("info_nce_loss: shape mismatch");
  if (!(temperature > S(0))) throw std::invalid_argument("info_nce_loss: temperature must be positive");

  const Mat<S> logits = (nl * pl.transpose()) / temperature;

  // Cross-entropy of each row's softmax against the diagonal; returns the
  // loss and writes (softmax − I)/B into dlogits.
  auto row_xent = [B](const Mat<S>& lg, Mat<S>& dlogits) {
    S total = 0;
    dlogits.resize(B, B);
    for (Eigen::Index i = 0; i < B; ++i) {
      const S mx = lg.row(i).maxCoeff();
      auto e = (lg.row(i).array() - mx).exp();
      const S z = e.sum();
      total += std::log(z) + mx - lg(i, i);
      dlogits.row(i) = (e / z).matrix();
      dlogits(i, i) -= S(1);
    }
    dlogits /= static_cast<S>(B);
    return total / static_cast<S>(B);
  };

  ContrastiveLoss<S> out;
  Mat<S> dlogits;
  out.loss = row_xent(logits, dlogits);
  if (symmetric) {
    Mat<S> dlogits_t;
    const S back = row_xent(logits.transpose(), dlogits_t);
    out.loss = S(0.5) * (out.loss + back);
    dlogits = S(0.5) * (dlogits + dlogits_t.transpose());
  }
  out.d_nl = (dlogits * pl) / temperature;
  out.d_pl = (dlogits.transpose() * nl) / temperature;
  return out;
}

/// log(1 + eˣ) without overflow.
template <typename S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename S>
struct BinaryLoss {
  S loss = 0;
  std::vector<S> d_pos;  // ∂loss/∂positive logits
  std::vector<S> d_neg;  // ∂loss/∂negative logits
};

/// Pairwise binary cross-entropy over matched and mismatched pairs, from logits:
///   −(1/B) Σᵢ [ log p(xᵢ,yᵢ) + (1/m) Σₖ log(1 − p(xᵢ,y_{neg(i,k)})) ]
/// `neg_logits` holds m = neg_logits.size()/B negatives per query, grouped by
/// query. The default one-negative batch has m = 1.
template <typename S>
BinaryLoss<S> bce_loss(std::span<const S> pos_logits, std::span<const S> neg_logits) {
  const std::size_t B = pos_logits.size();
  if (B == 0) throw std::invalid_argument("bce_loss: empty batch");
  if (neg_logits.empty() || neg_logits.size() % B != 0) {
    throw std::invalid_argument("bce_loss: negatives must be a positive multiple of the batch size");
  }
  const std::size_t m = neg_logits.size() / B;
  const S inv_b = S(1) / static_cast<S>(B);
  const S inv_m = S(1) / static_cast<S>(m);
  BinaryLoss<S> out;
  out.d_pos.resize(B);
  out.d_neg.resize(neg_logits.size());
  S total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    // −log σ(a) = softplus(−a);  −log(1 − σ(b)) = softplus(b)
    total += softplus(-pos_logits[i]);
    out.d_pos[i] = -(S(1) - sigmoid(pos_logits[i])) * inv_b;
    for (std::size_t k = 0; k < m; ++k) {
      const S b = neg_logits[i * m + k];
      total += inv_m * softplus(b);
      out.d_neg[i * m + k] = sigmoid(b) * inv_m * inv_b;
    }
  }
  out.loss = total * inv_b;
  return out;
}

/// Same objective taking probabilities; converts to logits first.
template <typename S>
S bce_loss_from_probabilities(std::span<const S> p_pos, std::span<const S> p_neg) {
  auto to_logit = [](S p) {
    if (!(p > S(0) && p < S(1))) throw std::invalid_argument("bce_loss: probabilities must lie in (0, 1)");
    return std::log(p) - std::log1p(-p);
  };
  std::vector<S> a, b;
  for (S p : p_pos) a.push_back(to_logit(p));
  for (S p : p_neg) b.push_back(to_logit(p));
  return bce_loss<S>(a, b).loss;
}

}  // namespace codesearch
