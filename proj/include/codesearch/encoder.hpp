#pragma once

// Dual-mode transformer encoder.
//
// Fast mode: CLS + tokens (+ NL or PL mode embedding) → transformer →
// final-layer-norm CLS state → L2-normalized embedding.
// Slow mode: CLS + nl + SEP + pl (+ pair mode embedding) → transformer →
// CLS state → tanh MLP head → scalar logit → sigmoid probability.
//
// Layers are pre-norm:  x ← x + Drop(Attn(LN₁ x));  x ← x + Drop(FFN(LN₂ x)),
// with a final layer norm on the CLS row. Every forward has a traced variant
// that records what reverse mode needs; backward accumulates exact gradients
// into a Parameters structure of the same shape as the model.
//
// Everything is templated on the scalar: float for training and serving,
// double for finite-difference checks.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "codesearch/common.hpp"
#include "codesearch/model_config.hpp"
#include "codesearch/vocabulary.hpp"

namespace codesearch {

// Row of the mode-embedding table.
enum class InputMode : int { nl = 0, pl = 1, pair = 2 };

inline InputMode input_mode(TextMode m) { return m == TextMode::nl ? InputMode::nl : InputMode::pl; }

// ---------------------------------------------------------------------------
// Parameters

template <typename S>
struct LayerParams {
  Mat<S> ln1_gamma, ln1_beta;
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ln2_gamma, ln2_beta;
  Mat<S> w1, b1, w2, b2;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gamma", self.ln1_gamma);
    f(prefix + "ln1.beta", self.ln1_beta);
    f(prefix + "attn.wq", self.wq);
    f(prefix + "attn.bq", self.bq);
    f(prefix + "attn.wk", self.wk);
    f(prefix + "attn.bk", self.bk);
    f(prefix + "attn.wv", self.wv);
    f(prefix + "attn.bv", self.bv);
    f(prefix + "attn.wo", self.wo);
    f(prefix + "attn.bo", self.bo);
    f(prefix + "ln2.gamma", self.ln2_gamma);
    f(prefix + "ln2.beta", self.ln2_beta);
    f(prefix + "ffn.w1", self.w1);
    f(prefix + "ffn.b1", self.b1);
    f(prefix + "ffn.w2", self.w2);
    f(prefix + "ffn.b2", self.b2);
  }
};

template <typename S>
struct TowerParams {
  Mat<S> token_embedding;     // vocab × d
  Mat<S> position_embedding;  // max_positions × d
  Mat<S> mode_embedding;      // 3 × d
  std::vector<LayerParams<S>> layers;
  Mat<S> final_gamma, final_beta;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "token_embedding", self.token_embedding);
    f(prefix + "position_embedding", self.position_embedding);
    f(prefix + "mode_embedding", self.mode_embedding);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      LayerParams<S>::visit(self.layers[i], prefix + "layer" + std::to_string(i) + ".", f);
    }
    f(prefix + "final_ln.gamma", self.final_gamma);
    f(prefix + "final_ln.beta", self.final_beta);
  }
};

// Classifier MLP: logit = tanh(cls·w1 + b1)·w2 + b2.
template <typename S>
struct HeadParams {
  Mat<S> w1, b1, w2, b2;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "w1", self.w1);
    f(prefix + "b1", self.b1);
    f(prefix + "w2", self.w2);
    f(prefix + "b2", self.b2);
  }
};

/// All trainable tensors. Gradients use the same type, zero-initialized.
/// Visiting order is the on-disk tensor order.
template <typename S>
struct Parameters {
  TowerParams<S> fast;
  std::optional<TowerParams<S>> slow;  // separate variant only
  std::optional<HeadParams<S>> head;   // shared and separate variants

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::vector<Mat<S>*> tensors() {
    std::vector<Mat<S>*> out;
    for_each([&](const std::string&, Mat<S>& t) { out.push_back(&t); });
    return out;
  }
  std::vector<const Mat<S>*> tensors() const {
    std::vector<const Mat<S>*> out;
    for_each([&](const std::string&, const Mat<S>& t) { out.push_back(&t); });
    return out;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for_each([&](const std::string& n, const Mat<S>&) { out.push_back(n); });
    return out;
  }

  Parameters zeros_like() const {
    Parameters z = *this;
    z.for_each([](const std::string&, Mat<S>& t) { t.setZero(); });
    return z;
  }

  void set_zero() {
    for_each([](const std::string&, Mat<S>& t) { t.setZero(); });
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat<S>& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  template <typename T>
  Parameters<T> cast() const {
    Parameters<T> out;
    out.fast = cast_tower<T>(fast);
    if (slow) out.slow = cast_tower<T>(*slow);
    if (head) {
      out.head = HeadParams<T>{head->w1.template cast<T>(), head->b1.template cast<T>(),
                               head->w2.template cast<T>(), head->b2.template cast<T>()};
    }
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    TowerParams<S>::visit(self.fast, self.slow ? "fast." : "tower.", f);
    if (self.slow) TowerParams<S>::visit(*self.slow, "slow.", f);
    if (self.head) HeadParams<S>::visit(*self.head, "head.", f);
  }

  template <typename T>
  static TowerParams<T> cast_tower(const TowerParams<S>& t) {
    TowerParams<T> o;
    o.token_embedding = t.token_embedding.template cast<T>();
    o.position_embedding = t.position_embedding.template cast<T>();
    o.mode_embedding = t.mode_embedding.template cast<T>();
    o.final_gamma = t.final_gamma.template cast<T>();
    o.final_beta = t.final_beta.template cast<T>();
    for (const auto& l : t.layers) {
      LayerParams<T> c;
      c.ln1_gamma = l.ln1_gamma.template cast<T>();
      c.ln1_beta = l.ln1_beta.template cast<T>();
      c.wq = l.wq.template cast<T>();
      c.bq = l.bq.template cast<T>();
      c.wk = l.wk.template cast<T>();
      c.bk = l.bk.template cast<T>();
      c.wv = l.wv.template cast<T>();
      c.bv = l.bv.template cast<T>();
      c.wo = l.wo.template cast<T>();
      c.bo = l.bo.template cast<T>();
      c.ln2_gamma = l.ln2_gamma.template cast<T>();
      c.ln2_beta = l.ln2_beta.template cast<T>();
      c.w1 = l.w1.template cast<T>();
      c.b1 = l.b1.template cast<T>();
      c.w2 = l.w2.template cast<T>();
      c.b2 = l.b2.template cast<T>();
      o.layers.push_back(std::move(c));
    }
    return o;
  }
};

/// a += scale * b, tensor by tensor. Shapes must match.
template <typename S>
void axpy(Parameters<S>& a, S scale, const Parameters<S>& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) *ta[i] += scale * *tb[i];
}

template <typename S>
S global_norm(const Parameters<S>& p) {
  S sq = 0;
  p.for_each([&](const std::string&, const Mat<S>& t) { sq += t.squaredNorm(); });
  return std::sqrt(sq);
}

template <typename S>
bool all_finite(const Parameters<S>& p) {
  bool ok = true;
  p.for_each([&](const std::string&, const Mat<S>& t) { ok = ok && t.allFinite(); });
  return ok;
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

template <typename S>
Mat<S> truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z;
    do {
      z = n(rng);
    } while (std::abs(z) > 2.0);
    m.data()[i] = static_cast<S>(z * stddev);
  }
  return m;
}

template <typename S>
TowerParams<S> init_tower(const ModelConfig& c, Rng& rng, double stddev) {
  const Eigen::Index d = c.hidden_dim;
  TowerParams<S> t;
  t.token_embedding = truncated_normal<S>(c.vocab_size, d, stddev, rng);
  t.position_embedding = truncated_normal<S>(c.max_positions, d, stddev, rng);
  t.mode_embedding = truncated_normal<S>(3, d, stddev, rng);
  for (std::uint32_t i = 0; i < c.num_layers; ++i) {
    LayerParams<S> l;
    l.ln1_gamma = Mat<S>::Ones(1, d);
    l.ln1_beta = Mat<S>::Zero(1, d);
    l.wq = truncated_normal<S>(d, d, stddev, rng);
    l.bq = Mat<S>::Zero(1, d);
    l.wk = truncated_normal<S>(d, d, stddev, rng);
    l.bk = Mat<S>::Zero(1, d);
    l.wv = truncated_normal<S>(d, d, stddev, rng);
    l.bv = Mat<S>::Zero(1, d);
    l.wo = truncated_normal<S>(d, d, stddev, rng);
    l.bo = Mat<S>::Zero(1, d);
    l.ln2_gamma = Mat<S>::Ones(1, d);
    l.ln2_beta = Mat<S>::Zero(1, d);
    l.w1 = truncated_normal<S>(d, c.ff_dim, stddev, rng);
    l.b1 = Mat<S>::Zero(1, c.ff_dim);
    l.w2 = truncated_normal<S>(c.ff_dim, d, stddev, rng);
    l.b2 = Mat<S>::Zero(1, d);
    t.layers.push_back(std::move(l));
  }
  t.final_gamma = Mat<S>::Ones(1, d);
  t.final_beta = Mat<S>::Zero(1, d);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Building blocks

/// Multiplies activations by an inverted-dropout mask. A null sampler (or a
/// zero rate) means inference: no masks are drawn.
template <typename S>
class DropoutSampler {
 public:
  DropoutSampler(S rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  bool active() const { return rate_ > S(0); }
  Mat<S> mask(Eigen::Index rows, Eigen::Index cols) {
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate_));
    const S scale = S(1) / (S(1) - rate_);
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng_) ? scale : S(0);
    return m;
  }

 private:
  S rate_;
  Rng rng_;
};

template <typename S>
struct LayerNormTrace {
  Mat<S> xhat;
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
};

template <typename S>
inline constexpr S kLayerNormEps = S(1e-5);

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, LayerNormTrace<S>* trace) {
  const auto rows = x.rows();
  const auto n = static_cast<S>(x.cols());
  Mat<S> xhat(rows, x.cols());
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S mean = x.row(r).sum() / n;
    auto centered = (x.row(r).array() - mean).matrix();
    const S var = centered.squaredNorm() / n;
    inv(r) = S(1) / std::sqrt(var + kLayerNormEps<S>);
    xhat.row(r) = centered * inv(r);
  }
  Mat<S> y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
  if (trace) {
    trace->xhat = std::move(xhat);
    trace->inv_std = std::move(inv);
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& gamma, const LayerNormTrace<S>& t, Mat<S>& dgamma,
                           Mat<S>& dbeta) {
  dgamma += (dy.array() * t.xhat.array()).colwise().sum().matrix();
  dbeta += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * gamma.row(0).array();
  const auto n = static_cast<S>(dy.cols());
  Mat<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const S mean_d = dxhat.row(r).sum() / n;
    const S mean_dx = dxhat.row(r).dot(t.xhat.row(r)) / n;
    dx.row(r) = t.inv_std(r) * (dxhat.row(r).array() - mean_d - t.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <typename S>
S gelu_grad(S x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2)))) + x * S(kInvSqrt2Pi) * std::exp(S(-0.5) * x * x);
}

/// Row-wise numerically stable softmax.
template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

template <typename S>
struct LayerTrace {
  Eigen::Index query_rows = 0;
  LayerNormTrace<S> ln1;
  Mat<S> h;        // LN₁ output, L × d
  Mat<S> q, k, v;  // m × d, L × d, L × d
  std::vector<Mat<S>> probs;  // per head, m × L
  Mat<S> context;  // m × d
  Mat<S> drop_attn;
  LayerNormTrace<S> ln2;
  Mat<S> h2;       // m × d
  Mat<S> ff_pre;   // m × ff
  Mat<S> ff_act;   // m × ff
  Mat<S> drop_ffn;
};

/// One pre-norm block. Only the first `query_rows` positions are produced;
/// keys and values still see all L rows. The last block only needs the CLS row.
template <typename S>
Mat<S> layer_forward(const LayerParams<S>& p, std::uint32_t num_heads, const Mat<S>& x, Eigen::Index query_rows,
                     DropoutSampler<S>* dropout, LayerTrace<S>* trace) {
  const Eigen::Index d = x.cols();
  const Eigen::Index m = query_rows;
  const Eigen::Index dh = d / num_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  LayerNormTrace<S> ln1;
  Mat<S> h = layer_norm(x, p.ln1_gamma, p.ln1_beta, trace ? &ln1 : nullptr);
  Mat<S> q = (h.topRows(m) * p.wq).rowwise() + p.bq.row(0);
  Mat<S> k = (h * p.wk).rowwise() + p.bk.row(0);
  Mat<S> v = (h * p.wv).rowwise() + p.bv.row(0);

  Mat<S> context(m, d);
  std::vector<Mat<S>> probs;
  if (trace) probs.reserve(num_heads);
  for (std::uint32_t head = 0; head < num_heads; ++head) {
    const Eigen::Index off = head * dh;
    Mat<S> scores = (q.middleCols(off, dh) * k.middleCols(off, dh).transpose()) * scale;
    softmax_rows(scores);
    context.middleCols(off, dh).noalias() = scores * v.middleCols(off, dh);
    if (trace) probs.push_back(std::move(scores));
  }
  Mat<S> attn = (context * p.wo).rowwise() + p.bo.row(0);
  Mat<S> drop_attn;
  if (dropout && dropout->active()) {
    drop_attn = dropout->mask(m, d);
    attn.array() *= drop_attn.array();
  }
  Mat<S> x1 = x.topRows(m) + attn;

  LayerNormTrace<S> ln2;
  Mat<S> h2 = layer_norm(x1, p.ln2_gamma, p.ln2_beta, trace ? &ln2 : nullptr);
  Mat<S> ff_pre = (h2 * p.w1).rowwise() + p.b1.row(0);
  Mat<S> ff_act = ff_pre.unaryExpr([](S z) { return gelu(z); });
  Mat<S> ffn = (ff_act * p.w2).rowwise() + p.b2.row(0);
  Mat<S> drop_ffn;
  if (dropout && dropout->active()) {
    drop_ffn = dropout->mask(m, d);
    ffn.array() *= drop_ffn.array();
  }
  Mat<S> out = x1 + ffn;

  if (trace) {
    trace->query_rows = m;
    trace->ln1 = std::move(ln1);
    trace->h = std::move(h);
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->probs = std::move(probs);
    trace->context = std::move(context);
    trace->drop_attn = std::move(drop_attn);
    trace->ln2 = std::move(ln2);
    trace->h2 = std::move(h2);
    trace->ff_pre = std::move(ff_pre);
    trace->ff_act = std::move(ff_act);
    trace->drop_ffn = std::move(drop_ffn);
  }
  return out;
}

/// Reverse of layer_forward: takes d(out) (m × d), accumulates parameter
/// gradients into `g`, returns d(x) (L × d).
template <typename S>
Mat<S> layer_backward(const LayerParams<S>& p, std::uint32_t num_heads, const LayerTrace<S>& t, const Mat<S>& dout,
                      LayerParams<S>& g) {
  const Eigen::Index m = t.query_rows;
  const Eigen::Index L = t.h.rows();
  const Eigen::Index d = t.h.cols();
  const Eigen::Index hd = d / num_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));

  // Feed-forward branch.
  Mat<S> dffn = dout;
  if (t.drop_ffn.size()) dffn.array() *= t.drop_ffn.array();
  g.w2.noalias() += t.ff_act.transpose() * dffn;
  g.b2 += dffn.colwise().sum();
  Mat<S> dact = dffn * p.w2.transpose();
  Mat<S> dpre = dact.array() * t.ff_pre.unaryExpr([](S z) { return gelu_grad(z); }).array();
  g.w1.noalias() += t.h2.transpose() * dpre;
  g.b1 += dpre.colwise().sum();
  Mat<S> dh2 = dpre * p.w1.transpose();
  Mat<S> dx1 = dout + layer_norm_backward(dh2, p.ln2_gamma, t.ln2, g.ln2_gamma, g.ln2_beta);

  // Attention branch.
  Mat<S> dattn = dx1;
  if (t.drop_attn.size()) dattn.array() *= t.drop_attn.array();
  g.wo.noalias() += t.context.transpose() * dattn;
  g.bo += dattn.colwise().sum();
  Mat<S> dcontext = dattn * p.wo.transpose();

  Mat<S> dq(m, d), dk(L, d), dv(L, d);
  for (std::uint32_t head = 0; head < num_heads; ++head) {
    const Eigen::Index off = head * hd;
    const Mat<S>& P = t.probs[head];
    Mat<S> dctx_h = dcontext.middleCols(off, hd);
    Mat<S> dP = dctx_h * t.v.middleCols(off, hd).transpose();
    dv.middleCols(off, hd).noalias() = P.transpose() * dctx_h;
    Mat<S> dS = P.array() * (dP.array().colwise() - (dP.array() * P.array()).rowwise().sum());
    dq.middleCols(off, hd).noalias() = (dS * t.k.middleCols(off, hd)) * scale;
    dk.middleCols(off, hd).noalias() = (dS.transpose() * t.q.middleCols(off, hd)) * scale;
  }
  g.wq.noalias() += t.h.topRows(m).transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk.noalias() += t.h.transpose() * dk;
  g.bk += dk.colwise().sum();
  g.wv.noalias() += t.h.transpose() * dv;
  g.bv += dv.colwise().sum();

  Mat<S> dh = dk * p.wk.transpose() + dv * p.wv.transpose();
  dh.topRows(m) += dq * p.wq.transpose();
  Mat<S> dx = layer_norm_backward(dh, p.ln1_gamma, t.ln1, g.ln1_gamma, g.ln1_beta);
  dx.topRows(m) += dx1;
  return dx;
}

template <typename S>
struct TowerTrace {
  TokenSeq tokens;
  InputMode mode = InputMode::nl;
  Mat<S> drop_embed;
  std::vector<LayerTrace<S>> layers;
  LayerNormTrace<S> final_ln;
  Eigen::Index final_rows = 0;  // rows entering the final layer norm
};

/// Runs a full sequence (already carrying CLS/SEP) through one tower and
/// returns the final-normed CLS state (1 × d).
template <typename S>
RowVec<S> tower_forward(const TowerParams<S>& p, const ModelConfig& c, const TokenSeq& seq, InputMode mode,
                        DropoutSampler<S>* dropout, TowerTrace<S>* trace) {
  const auto L = static_cast<Eigen::Index>(seq.size());
  if (L == 0) throw std::invalid_argument("encoder: empty sequence");
  if (L > static_cast<Eigen::Index>(c.max_positions)) {
    throw std::invalid_argument("encoder: sequence of " + std::to_string(L) + " positions exceeds max_positions " +
                                std::to_string(c.max_positions));
  }
  const Eigen::Index d = c.hidden_dim;
  Mat<S> x(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    const auto tok = seq[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= static_cast<TokenId>(c.vocab_size)) throw std::out_of_range("encoder: token id out of range");
    x.row(i) = p.token_embedding.row(tok) + p.position_embedding.row(i);
    if (c.mode_embeddings) x.row(i) += p.mode_embedding.row(static_cast<int>(mode));
  }
  Mat<S> drop_embed;
  if (dropout && dropout->active()) {
    drop_embed = dropout->mask(L, d);
    x.array() *= drop_embed.array();
  }
  if (trace) {
    trace->tokens = seq;
    trace->mode = mode;
    trace->layers.assign(p.layers.size(), LayerTrace<S>{});
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Eigen::Index rows = (l + 1 == p.layers.size()) ? 1 : x.rows();
    x = layer_forward(p.layers[l], c.num_heads, x, rows, dropout, trace ? &trace->layers[l] : nullptr);
  }
  if (trace) {
    trace->drop_embed = std::move(drop_embed);
    trace->final_rows = x.rows();
  }
  Mat<S> cls_in = x.topRows(1);
  Mat<S> z = layer_norm(cls_in, p.final_gamma, p.final_beta, trace ? &trace->final_ln : nullptr);
  return z.row(0);
}

template <typename S>
void tower_backward(const TowerParams<S>& p, const ModelConfig& c, const TowerTrace<S>& t, const RowVec<S>& dcls,
                    TowerParams<S>& g) {
  Mat<S> dz = dcls;
  Mat<S> dtop = layer_norm_backward(dz, p.final_gamma, t.final_ln, g.final_gamma, g.final_beta);
  Mat<S> dx = Mat<S>::Zero(t.final_rows, dz.cols());
  dx.topRows(1) = dtop;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    dx = layer_backward(p.layers[l], c.num_heads, t.layers[l], dx, g.layers[l]);
  }
  if (t.drop_embed.size()) dx.array() *= t.drop_embed.array();
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    g.token_embedding.row(t.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    g.position_embedding.row(i) += dx.row(i);
  }
  if (c.mode_embeddings) g.mode_embedding.row(static_cast<int>(t.mode)) += dx.colwise().sum();
}

// ---------------------------------------------------------------------------
// Sequence assembly

/// CLS + tokens. Throws if empty or longer than `max_positions` allows.
inline TokenSeq fast_sequence(const TokenSeq& tokens, std::uint32_t max_positions) {
  if (tokens.empty()) throw std::invalid_argument("encode: empty token sequence");
  if (tokens.size() + 1 > max_positions) {
    throw std::invalid_argument("encode: " + std::to_string(tokens.size()) + " tokens exceed the " +
                                std::to_string(max_positions - 1) + "-token limit; truncate first");
  }
  TokenSeq seq;
  seq.reserve(tokens.size() + 1);
  seq.push_back(reserved::cls);
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  return seq;
}

/// CLS + nl + SEP + pl. Throws if empty or over `max_positions`.
inline TokenSeq pair_sequence(const TokenSeq& nl, const TokenSeq& pl, std::uint32_t max_positions) {
  if (nl.empty() || pl.empty()) throw std::invalid_argument("classify: empty token sequence");
  if (nl.size() + pl.size() + 2 > max_positions) {
    throw std::invalid_argument("classify: pair of " + std::to_string(nl.size() + pl.size() + 2) +
                                " positions exceeds " + std::to_string(max_positions) + "; truncate first");
  }
  TokenSeq seq;
  seq.reserve(nl.size() + pl.size() + 2);
  seq.push_back(reserved::cls);
  seq.insert(seq.end(), nl.begin(), nl.end());
  seq.push_back(reserved::sep);
  seq.insert(seq.end(), pl.begin(), pl.end());
  return seq;
}

/// Shortens the PL side so CLS + nl + SEP + pl fits in `limit` positions.
inline TokenSeq fit_pair_code(const TokenSeq& nl, const TokenSeq& pl, std::size_t limit) {
  const std::size_t room = limit > nl.size() + 2 ? limit - nl.size() - 2 : 0;
  if (room == 0) throw std::invalid_argument("classify: query leaves no room for code");
  return TokenSeq(pl.begin(), pl.begin() + static_cast<std::ptrdiff_t>(std::min(room, pl.size())));
}

// ---------------------------------------------------------------------------
// Model

template <typename S>
struct EncodeTrace {
  TowerTrace<S> tower;
  RowVec<S> cls;
  S norm = 0;
  RowVec<S> embedding;
};

template <typename S>
struct ClassifyTrace {
  TowerTrace<S> tower;
  RowVec<S> cls;
  RowVec<S> hidden;  // tanh output
  S logit = 0;
};

template <typename S>
class EncoderModel {
 public:
  using Scalar = S;

  EncoderModel() = default;

  EncoderModel(ModelConfig config, Parameters<S> params) : config_(config), params_(std::move(params)) {
    config_.validate();
    check_layout();
  }

  /// Truncated-normal (std 0.02, cut at 2σ) weights and embeddings, zero
  /// biases, layer norms at (1, 0).
  static EncoderModel random(const ModelConfig& config, std::uint64_t seed, double stddev = 0.02) {
    config.validate();
    Rng rng(seed);
    Parameters<S> p;
    p.fast = detail::init_tower<S>(config, rng, stddev);
    if (config.variant == Variant::separate) p.slow = detail::init_tower<S>(config, rng, stddev);
    if (config.variant != Variant::fast_only) {
      HeadParams<S> h;
      h.w1 = detail::truncated_normal<S>(config.hidden_dim, config.head_hidden, stddev, rng);
      h.b1 = Mat<S>::Zero(1, config.head_hidden);
      h.w2 = detail::truncated_normal<S>(config.head_hidden, 1, stddev, rng);
      h.b2 = Mat<S>::Zero(1, 1);
      p.head = std::move(h);
    }
    return EncoderModel(config, std::move(p));
  }

  const ModelConfig& config() const { return config_; }
  const Parameters<S>& params() const { return params_; }
  Parameters<S>& params() { return params_; }

  bool can_classify() const { return params_.head.has_value(); }
  const TowerParams<S>& fast_tower() const { return params_.fast; }
  const TowerParams<S>& slow_tower() const { return params_.slow ? *params_.slow : params_.fast; }

  /// Fast mode: unit-norm CLS embedding of an NL or PL token sequence.
  RowVec<S> encode(const TokenSeq& tokens, TextMode mode) const {
    return encode_traced(tokens, mode, nullptr, false).embedding;
  }

  /// Slow mode logit for the (nl, pl) pair.
  S classify_logit(const TokenSeq& nl, const TokenSeq& pl) const {
    return classify_traced(nl, pl, nullptr, false).logit;
  }

  /// Slow mode match probability, sigmoid(logit).
  S classify(const TokenSeq& nl, const TokenSeq& pl) const { return sigmoid(classify_logit(nl, pl)); }

  /// `record` keeps the activations encode_backward needs.
  EncodeTrace<S> encode_traced(const TokenSeq& tokens, TextMode mode, DropoutSampler<S>* dropout = nullptr,
                               bool record = true) const {
    EncodeTrace<S> out;
    const auto seq = fast_sequence(tokens, config_.max_positions);
    out.cls = tower_forward(params_.fast, config_, seq, input_mode(mode), dropout, record ? &out.tower : nullptr);
    out.norm = out.cls.norm();
    out.embedding = out.cls / out.norm;
    return out;
  }

  /// Reverse of encode: d(embedding) → parameter gradients (fast tower).
  void encode_backward(const EncodeTrace<S>& t, const RowVec<S>& d_embedding, Parameters<S>& grads) const {
    const S dot = t.embedding.dot(d_embedding);
    RowVec<S> dcls = (d_embedding - dot * t.embedding) / t.norm;
    tower_backward(params_.fast, config_, t.tower, dcls, grads.fast);
  }

  ClassifyTrace<S> classify_traced(const TokenSeq& nl, const TokenSeq& pl, DropoutSampler<S>* dropout = nullptr,
                                   bool record = true) const {
    if (!params_.head) throw std::logic_error("classify: model has no classifier head (fast_only variant)");
    ClassifyTrace<S> out;
    const auto seq = pair_sequence(nl, pl, config_.max_positions);
    out.cls = tower_forward(slow_tower(), config_, seq, InputMode::pair, dropout, record ? &out.tower : nullptr);
    const auto& h = *params_.head;
    RowVec<S> pre = out.cls * h.w1 + h.b1.row(0);
    out.hidden = pre.array().tanh().matrix();
    out.logit = out.hidden.dot(h.w2.col(0)) + h.b2(0, 0);
    return out;
  }

  /// Reverse of classify: d(logit) → head and slow-tower gradients.
  void classify_backward(const ClassifyTrace<S>& t, S d_logit, Parameters<S>& grads) const {
    const auto& h = *params_.head;
    auto& gh = *grads.head;
    gh.w2.col(0) += d_logit * t.hidden.transpose();
    gh.b2(0, 0) += d_logit;
    RowVec<S> dhidden = d_logit * h.w2.col(0).transpose();
    RowVec<S> dpre = dhidden.array() * (S(1) - t.hidden.array().square());
    gh.w1.noalias() += t.cls.transpose() * dpre;
    gh.b1 += dpre;
    RowVec<S> dcls = dpre * h.w1.transpose();
    TowerParams<S>& gt = params_.slow ? *grads.slow : grads.fast;
    tower_backward(slow_tower(), config_, t.tower, dcls, gt);
  }

  template <typename T>
  EncoderModel<T> cast() const {
    return EncoderModel<T>(config_, params_.template cast<T>());
  }

 private:
  void check_layout() const {
    const bool want_head = config_.variant != Variant::fast_only;
    const bool want_slow = config_.variant == Variant::separate;
    if (params_.head.has_value() != want_head || params_.slow.has_value() != want_slow) {
      throw std::invalid_argument("model parameters do not match variant " + to_string(config_.variant));
    }
    auto check_tower = [&](const TowerParams<S>& t) {
      if (t.layers.size() != config_.num_layers || t.token_embedding.rows() != config_.vocab_size ||
          t.token_embedding.cols() != config_.hidden_dim || t.position_embedding.rows() != config_.max_positions) {
        throw std::invalid_argument("model parameters do not match config");
      }
    };
    check_tower(params_.fast);
    if (params_.slow) check_tower(*params_.slow);
  }

  ModelConfig config_;
  Parameters<S> params_;
};

using ModelF = EncoderModel<float>;
using ModelD = EncoderModel<double>;

}  // namespace codesearch
