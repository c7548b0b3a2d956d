#include "codesearch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace codesearch {

double mrr(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty rank list");
  double sum = 0;
  for (auto r : ranks) {
    if (r == 0) throw std::invalid_argument("mrr: ranks are 1-based");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

double recall_at_k(const std::vector<std::size_t>& ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty rank list");
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [&](std::size_t r) { return r >= 1 && r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_with_misses(const std::vector<std::optional<std::size_t>>& ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty rank list");
  double sum = 0;
  for (const auto& r : ranks) {
    if (!r) continue;
    if (*r == 0) throw std::invalid_argument("mrr: ranks are 1-based");
    sum += 1.0 / static_cast<double>(*r);
  }
  return sum / static_cast<double>(ranks.size());
}

double recall_at_k_with_misses(const std::vector<std::optional<std::size_t>>& ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty rank list");
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [&](const auto& r) { return r && *r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

LatencyStats latency_stats(std::vector<double> samples_ms) {
  LatencyStats s;
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  const std::size_t n = samples_ms.size();
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(n);
  s.median_ms = n % 2 ? samples_ms[n / 2] : 0.5 * (samples_ms[n / 2 - 1] + samples_ms[n / 2]);
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = samples_ms[std::min(n, std::max<std::size_t>(idx, 1)) - 1];
  return s;
}

}  // namespace codesearch
