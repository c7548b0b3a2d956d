#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codesearch/cascade.hpp"
#include "codesearch/metrics.hpp"

namespace codesearch {

struct QueryRank {
  std::string query_id;
  std::optional<std::size_t> rank;  // absent when the gold was not returned
};

struct ExcludedQuery {
  std::string query_id;
  std::string reason;
};

struct StageLatency {
  LatencyStats encode;
  LatencyStats lookup;
  LatencyStats rerank;
  LatencyStats total;
};

struct EvalReport {
  RetrievalMode mode = RetrievalMode::fast;
  std::size_t k = 0;
  std::size_t result_size = 0;
  std::size_t n_queries = 0;
  double mrr = 0;
  std::map<std::size_t, double> recall_at;
  std::vector<QueryRank> ranks;
  std::vector<ExcludedQuery> excluded;
  StageLatency latency;
  double queries_per_second = 0;

  nlohmann::json to_json() const;
};

/// Retrieves every query (its `id` names the gold candidate) and scores the
/// gold's position in the full final ordering. Queries whose gold is not in
/// the index, or that fail to retrieve, are listed in `excluded`.
/// `max_queries` = 0 evaluates all. Throws std::invalid_argument when no
/// query remains.
EvalReport evaluate(const CascadeSearcher& searcher, const std::vector<BimodalPair>& queries,
                    const CascadeConfig& config, const std::vector<std::size_t>& ks = {1, 2, 5, 8, 10},
                    std::size_t max_queries = 0);

struct BenchConfig {
  std::string method;  // row label, e.g. "cascade10"
  CascadeConfig cascade;
  std::size_t max_queries = 0;  // 0: no cap beyond the run's n_queries
};

struct BenchRow {
  std::string method;
  std::string params;  // model parameter count; the classifier head after '+'
  std::size_t n_queries = 0;
  double mean_seconds = 0;
  LatencyStats latency;
  double mrr = 0;
  double queries_per_second = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t index_size = 0;
  double index_build_seconds = 0;  // reported apart from the per-query figures
  std::size_t warmup_queries = 0;

  /// Columns: method, params, duration, mrr, queries/s.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Parses bench method names: fast, cascade<K> (e.g. cascade10) and slow.
BenchConfig parse_bench_method(const std::string& name, std::size_t rerank_batch_size = 32);

/// Times each config by retrieving queries one at a time after `warmup`
/// untimed queries. Only retrieval is timed; the index already exists.
BenchReport bench(const CascadeSearcher& searcher, const std::vector<BimodalPair>& queries,
                  const std::vector<BenchConfig>& configs, std::size_t n_queries, double index_build_seconds,
                  std::size_t warmup = 5);

/// "1.23M" style count of the parameters used by `mode`, with the classifier
/// head after a '+'.
std::string format_param_count(const ModelF& model, RetrievalMode mode);

}  // namespace codesearch
