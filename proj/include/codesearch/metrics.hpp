#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace codesearch {

/// Mean of 1/rank. Throws std::invalid_argument on an empty list or a rank of 0.
double mrr(const std::vector<std::size_t>& ranks);

/// Fraction of ranks ≤ K. Throws std::invalid_argument on an empty list or K = 0.
double recall_at_k(const std::vector<std::size_t>& ranks, std::size_t k);

/// Variants for truncated result lists: a missing rank means the gold
/// candidate was not returned and contributes 0.
double mrr_with_misses(const std::vector<std::optional<std::size_t>>& ranks);
double recall_at_k_with_misses(const std::vector<std::optional<std::size_t>>& ranks, std::size_t k);

struct LatencyStats {
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
};

/// Nearest-rank percentiles. An empty sample gives all zeros.
LatencyStats latency_stats(std::vector<double> samples_ms);

}  // namespace codesearch
