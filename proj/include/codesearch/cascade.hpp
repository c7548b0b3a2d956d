#pragma once

#include <functional>
#include <string>
#include <vector>

#include "codesearch/corpus.hpp"
#include "codesearch/encoder.hpp"
#include "codesearch/index.hpp"
#include "codesearch/ranked_list.hpp"

namespace codesearch {

enum class RetrievalMode { fast, cascade, slow_full };

std::string to_string(RetrievalMode m);
RetrievalMode parse_retrieval_mode(const std::string& s);

struct CascadeConfig {
  std::size_t k = 10;  // candidates passed to the classifier
  std::size_t rerank_batch_size = 32;
  RetrievalMode mode = RetrievalMode::cascade;
  // Length of the returned list; 0 returns the full ordering of the pool.
  std::size_t result_size = 0;

  /// Throws std::invalid_argument when K or the batch size is 0.
  void validate() const;
};

/// Scores a batch of index rows against a fixed query. Higher is better.
using PairScoreFn = std::function<std::vector<float>(const std::vector<std::size_t>& rows)>;

/// Reranks the first min(K, n) entries of `shortlist` by descending score,
/// ties by ascending candidate id, scoring `batch_size` rows per call. The
/// remaining entries follow in their original order. Ranks are renumbered.
RankedList rerank_with(const RankedList& shortlist, std::size_t k, std::size_t batch_size, const PairScoreFn& score);

/// Every row of a pool of `n` ids ordered by descending score, ties by
/// ascending id.
RankedList rank_all_with(const std::vector<std::string>& ids, std::size_t batch_size, const PairScoreFn& score);

/// Runs fast, cascade and slow_full retrieval against one model and index.
/// Holds references; the model, index and code tokens must outlive it.
class CascadeSearcher {
 public:
  /// `code_tokens[r]` are the PL tokens of index row r.
  CascadeSearcher(const ModelF& model, const VectorIndex& index, std::vector<TokenSeq> code_tokens);

  /// Aligns `candidates` to the index rows by id. Throws std::invalid_argument
  /// when an index id has no candidate.
  static CascadeSearcher from_candidates(const ModelF& model, const VectorIndex& index,
                                         const std::vector<BimodalPair>& candidates);

  const ModelF& model() const { return model_; }
  const VectorIndex& index() const { return index_; }
  const TokenSeq& code_tokens(std::size_t row) const { return code_tokens_.at(row); }

  /// Top `result_size` (0: all) candidates by cosine similarity.
  RankedList retrieve_fast(const TokenSeq& query, std::size_t result_size = 0) const;

  /// Classifier reranking of the first K entries of `shortlist`.
  /// Throws std::logic_error when the model has no classifier head.
  RankedList rerank(const TokenSeq& query, const RankedList& shortlist, std::size_t k, std::size_t batch_size) const;

  /// Classifies the query against every candidate.
  RankedList retrieve_slow_full(const TokenSeq& query, std::size_t batch_size = 32) const;

  RankedList retrieve(const TokenSeq& query, const CascadeConfig& config) const;

  /// Classifier probability of the query against each row.
  std::vector<float> pair_scores(const TokenSeq& query, const std::vector<std::size_t>& rows) const;

 private:
  void require_head() const;

  const ModelF& model_;
  const VectorIndex& index_;
  std::vector<TokenSeq> code_tokens_;
  std::size_t pair_limit_;
};

}  // namespace codesearch
