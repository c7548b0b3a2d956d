#include "codesearch/eval.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace codesearch {

namespace {

nlohmann::json latency_json(const LatencyStats& s) {
  return {{"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
}

std::string human_count(std::size_t n) {
  char buf[32];
  if (n >= 1'000'000) {
    std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
  } else if (n >= 1'000) {
    std::snprintf(buf, sizeof buf, "%.1fK", static_cast<double>(n) / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%zu", n);
  }
  return buf;
}

std::size_t tower_count(const TowerParams<float>& t) {
  std::size_t n = 0;
  TowerParams<float>::visit(t, "", [&](const std::string&, const MatF& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
  nlohmann::json rank_list = nlohmann::json::array();
  for (const auto& r : ranks) {
    rank_list.push_back({{"query_id", r.query_id}, {"rank", r.rank ? nlohmann::json(*r.rank) : nlohmann::json()}});
  }
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& e : excluded) excl.push_back({{"query_id", e.query_id}, {"reason", e.reason}});
  return {
      {"mode", to_string(mode)},
      {"k", k},
      {"result_size", result_size},
      {"n_queries", n_queries},
      {"mrr", mrr},
      {"recall_at", recall},
      {"ranks", rank_list},
      {"excluded", excl},
      {"latency",
       {{"encode", latency_json(latency.encode)},
        {"lookup", latency_json(latency.lookup)},
        {"rerank", latency_json(latency.rerank)},
        {"total", latency_json(latency.total)}}},
      {"queries_per_second", queries_per_second},
  };
}

EvalReport evaluate(const CascadeSearcher& searcher, const std::vector<BimodalPair>& queries,
                    const CascadeConfig& config, const std::vector<std::size_t>& ks, std::size_t max_queries) {
  config.validate();
  for (auto k : ks) {
    if (k == 0) throw std::invalid_argument("evaluate: recall K must be >= 1");
  }
  EvalReport report;
  report.mode = config.mode;
  report.k = config.k;
  report.result_size = config.result_size;
  const std::size_t n = max_queries == 0 ? queries.size() : std::min(max_queries, queries.size());
  std::vector<std::optional<std::size_t>> ranks;
  std::vector<double> enc, look, rer, tot;
  double total_ms = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = queries[i];
    if (!searcher.index().row_of(q.id)) {
      report.excluded.push_back({q.id, "gold candidate not in index"});
      continue;
    }
    RankedList list;
    try {
      list = searcher.retrieve(q.nl_tokens, config);
    } catch (const std::invalid_argument& e) {
      report.excluded.push_back({q.id, e.what()});
      continue;
    }
    const auto rank = list.rank_of(q.id);
    ranks.push_back(rank);
    report.ranks.push_back({q.id, rank});
    enc.push_back(list.timing.encode_ms);
    look.push_back(list.timing.lookup_ms);
    rer.push_back(list.timing.rerank_ms);
    tot.push_back(list.timing.total_ms);
    total_ms += list.timing.total_ms;
  }
  if (ranks.empty()) throw std::invalid_argument("evaluate: no query could be evaluated");
  report.n_queries = ranks.size();
  report.mrr = mrr_with_misses(ranks);
  for (auto k : ks) report.recall_at[k] = recall_at_k_with_misses(ranks, k);
  report.latency = {latency_stats(enc), latency_stats(look), latency_stats(rer), latency_stats(tot)};
  report.queries_per_second = total_ms > 0 ? 1000.0 * static_cast<double>(ranks.size()) / total_ms : 0.0;
  return report;
}

std::string format_param_count(const ModelF& model, RetrievalMode mode) {
  const auto& p = model.params();
  if (mode == RetrievalMode::fast || !p.head) return human_count(tower_count(p.fast));
  std::size_t head = 0;
  HeadParams<float>::visit(*p.head, "", [&](const std::string&, const MatF& m) {
    head += static_cast<std::size_t>(m.size());
  });
  std::size_t towers = tower_count(p.fast);
  if (p.slow) {
    // The cascade runs both towers; the full classifier needs only the slow one.
    towers = mode == RetrievalMode::slow_full ? tower_count(*p.slow) : towers + tower_count(*p.slow);
  }
  return human_count(towers) + "+" + human_count(head);
}

BenchConfig parse_bench_method(const std::string& name, std::size_t rerank_batch_size) {
  BenchConfig c;
  c.method = name;
  c.cascade.rerank_batch_size = rerank_batch_size;
  if (name == "fast") {
    c.cascade.mode = RetrievalMode::fast;
  } else if (name == "slow" || name == "slow_full") {
    c.cascade.mode = RetrievalMode::slow_full;
  } else if (name.rfind("cascade", 0) == 0 && name.size() > 7) {
    c.cascade.mode = RetrievalMode::cascade;
    const std::string digits = name.substr(7);
    if (digits.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("bad bench method '" + name + "' (expected cascade<K>)");
    }
    c.cascade.k = std::stoul(digits);
    if (c.cascade.k == 0) throw std::invalid_argument("bench: cascade K must be >= 1");
  } else {
    throw std::invalid_argument("unknown bench method '" + name + "' (expected fast, cascade<K>, slow)");
  }
  return c;
}

BenchReport bench(const CascadeSearcher& searcher, const std::vector<BimodalPair>& queries,
                  const std::vector<BenchConfig>& configs, std::size_t n_queries, double index_build_seconds,
                  std::size_t warmup) {
  if (n_queries == 0) throw std::invalid_argument("bench: n_queries must be >= 1");
  std::vector<const BimodalPair*> usable;
  for (const auto& q : queries) {
    if (searcher.index().row_of(q.id)) usable.push_back(&q);
  }
  if (usable.empty()) throw std::invalid_argument("bench: no query has its gold candidate in the index");

  BenchReport report;
  report.index_size = searcher.index().size();
  report.index_build_seconds = index_build_seconds;
  report.warmup_queries = warmup;
  for (const auto& cfg : configs) {
    cfg.cascade.validate();
    std::size_t n = std::min(n_queries, usable.size());
    if (cfg.max_queries) n = std::min(n, cfg.max_queries);
    for (std::size_t w = 0; w < warmup; ++w) searcher.retrieve(usable[w % usable.size()]->nl_tokens, cfg.cascade);

    std::vector<double> durations;
    std::vector<std::optional<std::size_t>> ranks;
    for (std::size_t i = 0; i < n; ++i) {
      Stopwatch sw;
      const RankedList list = searcher.retrieve(usable[i]->nl_tokens, cfg.cascade);
      durations.push_back(sw.elapsed_ms());
      ranks.push_back(list.rank_of(usable[i]->id));
    }
    BenchRow row;
    row.method = cfg.method;
    row.params = format_param_count(searcher.model(), cfg.cascade.mode);
    row.n_queries = n;
    row.latency = latency_stats(durations);
    row.mean_seconds = row.latency.mean_ms / 1000.0;
    row.mrr = mrr_with_misses(ranks);
    row.queries_per_second = row.mean_seconds > 0 ? 1.0 / row.mean_seconds : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "method,params,duration_s,mrr,queries_per_s\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.4f,%.2f\n", r.method.c_str(), r.params.c_str(), r.mean_seconds, r.mrr,
                  r.queries_per_second);
    out << buf;
  }
  return out.str();
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"method", r.method},
                  {"params", r.params},
                  {"n_queries", r.n_queries},
                  {"duration_s", r.mean_seconds},
                  {"latency", latency_json(r.latency)},
                  {"mrr", r.mrr},
                  {"queries_per_second", r.queries_per_second}});
  }
  return {{"rows", rs},
          {"index_size", index_size},
          {"index_build_seconds", index_build_seconds},
          {"warmup_queries", warmup_queries}};
}

}  // namespace codesearch
