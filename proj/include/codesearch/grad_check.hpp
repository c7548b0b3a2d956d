#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "codesearch/objective.hpp"

namespace codesearch {

// Scale floor for tensors whose true gradient is identically zero (the attention
// key bias, by softmax shift invariance); without it their rounding noise
// divided by itself reads as relative error 1.
inline constexpr double kGradFloor = 1e-6;

struct TensorGradCheck {
  std::string name;
  std::size_t size = 0;
  double max_abs_error = 0;
  // ‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, kGradFloor).
  double rel_error = 0;
};

struct GradCheckReport {
  std::vector<TensorGradCheck> tensors;
  double max_rel_error() const {
    double m = 0;
    for (const auto& t : tensors) m = std::max(m, t.rel_error);
    return m;
  }
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

struct NamedTensor {
  std::string name;
  MatD* value;
  const MatD* analytic_grad;
};

/// Central differences (f(θ+ε) − f(θ−ε)) / 2ε for every element of every
/// tensor, compared with the supplied analytic gradients. Each element is
/// restored bit-exactly after probing.
inline GradCheckReport grad_check(const std::vector<NamedTensor>& tensors, const std::function<double()>& loss,
                                  double eps = 1e-4) {
  GradCheckReport report;
  for (const auto& t : tensors) {
    TensorGradCheck c{t.name, static_cast<std::size_t>(t.value->size()), 0, 0};
    double max_a = 0, max_n = 0;
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      double& x = t.value->data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = loss();
      x = saved - eps;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = t.analytic_grad->data()[i];
      c.max_abs_error = std::max(c.max_abs_error, std::abs(analytic - numeric));
      max_a = std::max(max_a, std::abs(analytic));
      max_n = std::max(max_n, std::abs(numeric));
    }
    c.rel_error = c.max_abs_error / std::max({max_a, max_n, kGradFloor});
    report.tensors.push_back(std::move(c));
  }
  return report;
}

/// Finite-difference check of batch_objective on a double-precision copy of
/// `model` (no dropout).
inline GradCheckReport grad_check_objective(const EncoderModel<double>& model, const TrainBatch& batch,
                                            const ObjectiveOptions& opt, double eps = 1e-4) {
  EncoderModel<double> probe = model;
  Parameters<double> grads = probe.params().zeros_like();
  batch_objective(probe, batch, opt, &grads);
  auto names = probe.params().names();
  auto values = probe.params().tensors();
  auto analytic = std::as_const(grads).tensors();
  std::vector<NamedTensor> tensors;
  for (std::size_t i = 0; i < values.size(); ++i) tensors.push_back({names[i], values[i], analytic[i]});
  return grad_check(tensors, [&] { return batch_objective<double>(probe, batch, opt, nullptr).total; }, eps);
}

}  // namespace codesearch
