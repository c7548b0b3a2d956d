#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "codesearch/corpus.hpp"
#include "codesearch/encoder.hpp"
#include "codesearch/losses.hpp"

namespace codesearch {

enum class LossMode { fast_only, slow_only, joint };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct ObjectiveOptions {
  LossMode mode = LossMode::joint;
  double w_nce = 0.5;
  double w_ce = 0.5;
  bool symmetric_nce = false;
  // Every j ≠ i is a negative for query i (mean over them) instead of the
  // single sampled one in TrainBatch::negative_for.
  bool all_negatives = false;
  std::size_t pair_limit = SequenceLimits{}.pair;
};

template <typename S>
struct BatchLoss {
  S total = 0;
  S nce = 0;
  S ce = 0;
};

/// Throws std::invalid_argument if `mode` cannot run on `variant`.
inline void check_loss_mode(LossMode mode, Variant variant) {
  if (mode == LossMode::joint && variant != Variant::shared) {
    throw std::invalid_argument("joint loss needs the shared variant (got " + to_string(variant) + ")");
  }
  if (mode == LossMode::slow_only && variant == Variant::fast_only) {
    throw std::invalid_argument("slow_only loss needs a classifier head (variant is fast_only)");
  }
}

/// Loss of one batch under `opt`, and, when `grads` is non-null, the exact
/// gradient accumulated into it. The joint objective is
/// w_nce·L_infoNCE + w_ce·L_CE with both terms on the same batch. `dropout`
/// rate 0 disables dropout; masks are seeded per sequence from `dropout_seed`.
template <typename S>
BatchLoss<S> batch_objective(const EncoderModel<S>& model, const TrainBatch& batch, const ObjectiveOptions& opt,
                             Parameters<S>* grads, S dropout = S(0), std::uint64_t dropout_seed = 0) {
  check_loss_mode(opt.mode, model.config().variant);
  const std::size_t B = batch.size();
  if (B < 2) throw std::invalid_argument("batch_objective: batch size must be >= 2");
  const bool use_nce = opt.mode != LossMode::slow_only;
  const bool use_ce = opt.mode != LossMode::fast_only;
  const S w_nce = opt.mode == LossMode::joint ? static_cast<S>(opt.w_nce) : S(1);
  const S w_ce = opt.mode == LossMode::joint ? static_cast<S>(opt.w_ce) : S(1);
  const bool record = grads != nullptr;

  auto sampler = [&](std::uint64_t role, std::uint64_t i, std::uint64_t k) {
    return DropoutSampler<S>(dropout, mix_seed(dropout_seed, {role, i, k}));
  };

  BatchLoss<S> out;
  if (use_nce) {
    const Eigen::Index d = model.config().hidden_dim;
    std::vector<EncodeTrace<S>> nl_tr, pl_tr;
    nl_tr.reserve(B);
    pl_tr.reserve(B);
    Mat<S> X(B, d), Y(B, d);
    for (std::size_t i = 0; i < B; ++i) {
      auto dn = sampler(0, i, 0);
      auto dp = sampler(1, i, 0);
      nl_tr.push_back(model.encode_traced(batch.pairs[i].nl_tokens, TextMode::nl, &dn, record));
      pl_tr.push_back(model.encode_traced(batch.pairs[i].pl_tokens, TextMode::pl, &dp, record));
      X.row(static_cast<Eigen::Index>(i)) = nl_tr.back().embedding;
      Y.row(static_cast<Eigen::Index>(i)) = pl_tr.back().embedding;
    }
    auto c = info_nce_loss<S>(X, Y, static_cast<S>(model.config().temperature), opt.symmetric_nce);
    out.nce = c.loss;
    if (grads) {
      for (std::size_t i = 0; i < B; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        model.encode_backward(nl_tr[i], RowVec<S>(w_nce * c.d_nl.row(r)), *grads);
        model.encode_backward(pl_tr[i], RowVec<S>(w_nce * c.d_pl.row(r)), *grads);
      }
    }
  }

  if (use_ce) {
    std::vector<ClassifyTrace<S>> pos_tr, neg_tr;
    std::vector<S> pos, neg;
    for (std::size_t i = 0; i < B; ++i) {
      const auto& q = batch.pairs[i].nl_tokens;
      auto dpos = sampler(2, i, i);
      pos_tr.push_back(
          model.classify_traced(q, fit_pair_code(q, batch.pairs[i].pl_tokens, opt.pair_limit), &dpos, record));
      pos.push_back(pos_tr.back().logit);
      auto add_negative = [&](std::size_t j) {
        auto dneg = sampler(3, i, j);
        neg_tr.push_back(
            model.classify_traced(q, fit_pair_code(q, batch.pairs[j].pl_tokens, opt.pair_limit), &dneg, record));
        neg.push_back(neg_tr.back().logit);
      };
      if (opt.all_negatives) {
        for (std::size_t j = 0; j < B; ++j) {
          if (j != i) add_negative(j);
        }
      } else {
        add_negative(batch.negative_for.at(i));
      }
    }
    auto b = bce_loss<S>(pos, neg);
    out.ce = b.loss;
    if (grads) {
      for (std::size_t i = 0; i < pos_tr.size(); ++i) model.classify_backward(pos_tr[i], w_ce * b.d_pos[i], *grads);
      for (std::size_t i = 0; i < neg_tr.size(); ++i) model.classify_backward(neg_tr[i], w_ce * b.d_neg[i], *grads);
    }
  }

  out.total = (use_nce ? w_nce * out.nce : S(0)) + (use_ce ? w_ce * out.ce : S(0));
  return out;
}

}  // namespace codesearch
