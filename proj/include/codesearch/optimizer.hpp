#pragma once

#include <cmath>
#include <cstdint>

#include "codesearch/encoder.hpp"

namespace codesearch {

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
};

/// Adam with bias correction and optional global-norm gradient clipping.
template <typename S>
class Adam {
 public:
  Adam(const Parameters<S>& like, AdamOptions options)
      : options_(options), m_(like.zeros_like()), v_(like.zeros_like()) {}

  /// Clips `grads` in place (if enabled), then updates `params`. Returns the
  /// gradient norm before clipping.
  S step(Parameters<S>& params, Parameters<S>& grads) {
    const S norm = global_norm(grads);
    if (options_.clip_norm > 0 && norm > static_cast<S>(options_.clip_norm)) {
      const S scale = static_cast<S>(options_.clip_norm) / norm;
      grads.for_each([&](const std::string&, Mat<S>& g) { g *= scale; });
    }
    ++t_;
    const S b1 = static_cast<S>(options_.beta1);
    const S b2 = static_cast<S>(options_.beta2);
    const S lr = static_cast<S>(options_.learning_rate);
    const S eps = static_cast<S>(options_.eps);
    const S c1 = S(1) - static_cast<S>(std::pow(options_.beta1, static_cast<double>(t_)));
    const S c2 = S(1) - static_cast<S>(std::pow(options_.beta2, static_cast<double>(t_)));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i]->array() = b1 * m[i]->array() + (S(1) - b1) * g[i]->array();
      v[i]->array() = b2 * v[i]->array() + (S(1) - b2) * g[i]->array().square();
      p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps);
    }
    return norm;
  }

  std::uint64_t steps() const { return t_; }
  const Parameters<S>& first_moment() const { return m_; }
  const Parameters<S>& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  Parameters<S> m_;
  Parameters<S> v_;
  std::uint64_t t_ = 0;
};

}  // namespace codesearch
