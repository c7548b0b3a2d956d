#include "codesearch/cascade.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace codesearch {

std::string to_string(RetrievalMode m) {
  switch (m) {
    case RetrievalMode::fast: return "fast";
    case RetrievalMode::cascade: return "cascade";
    case RetrievalMode::slow_full: return "slow_full";
  }
  return "unknown";
}

RetrievalMode parse_retrieval_mode(const std::string& s) {
  if (s == "fast") return RetrievalMode::fast;
  if (s == "cascade") return RetrievalMode::cascade;
  if (s == "slow" || s == "slow_full") return RetrievalMode::slow_full;
  throw std::invalid_argument("unknown mode '" + s + "' (expected fast|cascade|slow)");
}

void CascadeConfig::validate() const {
  if (k == 0) throw std::invalid_argument("cascade: K must be >= 1");
  if (rerank_batch_size == 0) throw std::invalid_argument("cascade: rerank batch size must be >= 1");
}

namespace {

// Scores entries[0, n) in batches and sorts that block by descending score,
// ties by ascending id.
void score_and_sort_block(std::vector<RankedEntry>& entries, std::size_t n, std::size_t batch_size,
                          const PairScoreFn& score) {
  if (batch_size == 0) throw std::invalid_argument("rerank: batch size must be >= 1");
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<std::size_t> rows;
    rows.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) rows.push_back(entries[i].row);
    const auto scores = score(rows);
    if (scores.size() != rows.size()) throw std::logic_error("rerank: scorer returned the wrong number of scores");
    for (std::size_t i = start; i < end; ++i) entries[i].rerank_score = scores[i - start];
  }
  std::sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (*a.rerank_score != *b.rerank_score) return *a.rerank_score > *b.rerank_score;
              return a.candidate_id < b.candidate_id;
            });
}

}  // namespace

RankedList rerank_with(const RankedList& shortlist, std::size_t k, std::size_t batch_size, const PairScoreFn& score) {
  if (k == 0) throw std::invalid_argument("rerank: K must be >= 1");
  if (shortlist.entries.empty()) throw std::invalid_argument("rerank: empty shortlist");
  RankedList out = shortlist;
  out.stage = Stage::cascade;
  for (auto& e : out.entries) e.rerank_score.reset();
  score_and_sort_block(out.entries, std::min(k, out.entries.size()), batch_size, score);
  out.renumber();
  return out;
}

RankedList rank_all_with(const std::vector<std::string>& ids, std::size_t batch_size, const PairScoreFn& score) {
  RankedList out;
  out.stage = Stage::slow;
  out.entries.resize(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out.entries[r].row = r;
    out.entries[r].candidate_id = ids[r];
  }
  score_and_sort_block(out.entries, ids.size(), batch_size, score);
  out.renumber();
  return out;
}

CascadeSearcher::CascadeSearcher(const ModelF& model, const VectorIndex& index, std::vector<TokenSeq> code_tokens)
    : model_(model),
      index_(index),
      code_tokens_(std::move(code_tokens)),
      pair_limit_(std::min<std::size_t>(model.config().max_positions, SequenceLimits{}.pair)) {
  if (code_tokens_.size() != index_.size()) {
    throw std::invalid_argument("cascade: " + std::to_string(code_tokens_.size()) + " code sequences for an index of " +
                                std::to_string(index_.size()));
  }
  if (index_.dim() != model_.config().hidden_dim) {
    throw std::invalid_argument("cascade: index dim " + std::to_string(index_.dim()) + " does not match model dim " +
                                std::to_string(model_.config().hidden_dim));
  }
}

CascadeSearcher CascadeSearcher::from_candidates(const ModelF& model, const VectorIndex& index,
                                                 const std::vector<BimodalPair>& candidates) {
  std::unordered_map<std::string, const TokenSeq*> by_id;
  for (const auto& c : candidates) by_id.emplace(c.id, &c.pl_tokens);
  std::vector<TokenSeq> tokens;
  tokens.reserve(index.size());
  for (const auto& id : index.ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("cascade: index id '" + id + "' missing from candidates");
    tokens.push_back(*it->second);
  }
  return CascadeSearcher(model, index, std::move(tokens));
}

void CascadeSearcher::require_head() const {
  if (!model_.can_classify()) throw std::logic_error("model has no classifier head (fast_only variant)");
}

std::vector<float> CascadeSearcher::pair_scores(const TokenSeq& query, const std::vector<std::size_t>& rows) const {
  std::vector<float> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(model_.classify(query, fit_pair_code(query, code_tokens_.at(r), pair_limit_)));
  return out;
}

RankedList CascadeSearcher::retrieve_fast(const TokenSeq& query, std::size_t result_size) const {
  Stopwatch total;
  Stopwatch sw;
  const RowVec<float> q = model_.encode(query, TextMode::nl);
  const double encode_ms = sw.elapsed_ms();
  sw = Stopwatch();
  RankedList out = index_.top_k(q, result_size == 0 ? index_.size() : result_size);
  out.timing.lookup_ms = sw.elapsed_ms();
  out.timing.encode_ms = encode_ms;
  out.timing.total_ms = total.elapsed_ms();
  return out;
}

RankedList CascadeSearcher::rerank(const TokenSeq& query, const RankedList& shortlist, std::size_t k,
                                   std::size_t batch_size) const {
  require_head();
  Stopwatch sw;
  RankedList out =
      rerank_with(shortlist, k, batch_size, [&](const std::vector<std::size_t>& rows) { return pair_scores(query, rows); });
  out.timing.rerank_ms = sw.elapsed_ms();
  return out;
}

RankedList CascadeSearcher::retrieve_slow_full(const TokenSeq& query, std::size_t batch_size) const {
  require_head();
  Stopwatch sw;
  RankedList out = rank_all_with(index_.ids(), batch_size,
                                 [&](const std::vector<std::size_t>& rows) { return pair_scores(query, rows); });
  out.timing = StageTimings{};
  out.timing.rerank_ms = sw.elapsed_ms();
  out.timing.total_ms = out.timing.rerank_ms;
  return out;
}

RankedList CascadeSearcher::retrieve(const TokenSeq& query, const CascadeConfig& config) const {
  config.validate();
  Stopwatch total;
  RankedList out;
  switch (config.mode) {
    case RetrievalMode::fast:
      out = retrieve_fast(query, config.result_size);
      break;
    case RetrievalMode::cascade: {
      require_head();
      // The fast list must cover the reranked block even when fewer results are returned.
      const std::size_t fast_n = config.result_size == 0 ? 0 : std::max(config.k, config.result_size);
      RankedList fast = retrieve_fast(query, fast_n);
      out = rerank(query, fast, config.k, config.rerank_batch_size);
      out.timing.encode_ms = fast.timing.encode_ms;
      out.timing.lookup_ms = fast.timing.lookup_ms;
      if (config.result_size != 0 && out.entries.size() > config.result_size) out.entries.resize(config.result_size);
      break;
    }
    case RetrievalMode::slow_full:
      out = retrieve_slow_full(query, config.rerank_batch_size);
      if (config.result_size != 0 && out.entries.size() > config.result_size) out.entries.resize(config.result_size);
      break;
  }
  out.timing.total_ms = total.elapsed_ms();
  return out;
}

}  // namespace codesearch
