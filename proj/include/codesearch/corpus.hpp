#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "codesearch/common.hpp"
#include "codesearch/tokenizer.hpp"
#include "codesearch/vocabulary.hpp"

namespace codesearch {

// One JSONL record before tokenization.
struct RawPair {
  std::string id;
  std::string docstring;
  std::string code;
  std::string lang;
};

// A docstring/code example with its token ids. Both sides hold at least one
// token and respect the SequenceLimits they were tokenized with.
struct BimodalPair {
  std::string id;
  std::string nl_raw;
  std::string pl_raw;
  TokenSeq nl_tokens;
  TokenSeq pl_tokens;
};

struct RecordError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct JsonlLoad {
  std::vector<RawPair> records;
  std::vector<RecordError> errors;
};

/// Reads `{"id","docstring","code"[,"lang"]}` records, one per line. Bad
/// lines are reported and skipped; an unreadable file throws.
JsonlLoad load_jsonl(const std::string& path);
JsonlLoad parse_jsonl(std::string_view text);
void save_jsonl(const std::string& path, const std::vector<RawPair>& records);

/// Tokenizes both sides. Throws std::invalid_argument if either side is empty.
BimodalPair tokenize_pair(const RawPair& raw, const Vocabulary& vocab, const SequenceLimits& limits = {});

/// Tokenizes every record, collecting the ids of records that had to be dropped.
std::vector<BimodalPair> tokenize_pairs(const std::vector<RawPair>& raws, const Vocabulary& vocab,
                                        const SequenceLimits& limits, std::vector<std::string>* dropped = nullptr);

struct DatasetSplit {
  std::vector<BimodalPair> train;
  std::vector<BimodalPair> dev;
  std::vector<BimodalPair> test;
  std::vector<BimodalPair> candidates;  // retrieval pool; holds every dev/test gold
};

struct SplitSizes {
  std::size_t dev = 0;
  std::size_t test = 0;
  std::size_t pool_extra = 0;  // pool-only distractor codes, never trained on
};

/// Shuffles under `seed`, then carves dev, test and pool-only examples off the
/// front; the rest is train. The pool is dev golds, test golds, then extras.
DatasetSplit split_dataset(std::vector<BimodalPair> pairs, const SplitSizes& sizes, std::uint64_t seed);

/// Throws std::invalid_argument on duplicate ids, overlapping train/dev/test,
/// or a dev/test gold missing from the candidate pool.
void validate_split(const DatasetSplit& split);

/// Dataset directory: train/dev/test/candidates .jsonl (with token ids) and vocab.json.
void save_dataset(const std::string& dir, const DatasetSplit& split, const Vocabulary& vocab);
DatasetSplit load_dataset(const std::string& dir, Vocabulary* vocab_out = nullptr);

/// Order-sensitive hash over candidate ids and code.
std::uint64_t corpus_hash(const std::vector<BimodalPair>& candidates);

// ---------------------------------------------------------------------------
// Training batches

struct TrainBatch {
  std::vector<BimodalPair> pairs;
  // negative_for[i] is the in-batch PL index paired with NL i as a negative;
  // always a derangement (negative_for[i] != i).
  std::vector<std::size_t> negative_for;
  std::size_t size() const { return pairs.size(); }
};

/// Uniformly random derangement of {0..n-1}; n >= 2.
std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng);

/// Single-pass stream over a seeded shuffle of `pairs`. A trailing batch
/// smaller than two is dropped.
class BatchStream {
 public:
  BatchStream(const std::vector<BimodalPair>& pairs, std::size_t batch_size, std::uint64_t seed);
  std::optional<TrainBatch> next();
  std::size_t batch_count() const;

 private:
  const std::vector<BimodalPair>* pairs_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

/// Materialized BatchStream. Throws std::invalid_argument if batch_size < 2.
std::vector<TrainBatch> make_batches(const std::vector<BimodalPair>& pairs, std::size_t batch_size,
                                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthOptions {
  std::size_t n_pairs = 2000;
  std::size_t n_concepts = 200;
  std::size_t n_objects = 40;     // at most 40
  std::size_t n_qualifiers = 24;  // at most 24
  double distractor_rate = 0.15;
  std::uint64_t seed = 7;
};

/// The concept keyword vocabulary used by synth_corpus, index = concept id.
std::vector<std::string> synth_concept_words(std::size_t n_concepts);

/// Templated docstring/code pairs. Each pair draws one concept keyword that
/// appears verbatim on both sides, plus an object and a qualifier word; the
/// three word lists are disjoint. Distractor filler words are inserted at
/// `distractor_rate` per slot and never coincide with a concept word.
std::vector<RawPair> synth_corpus(const SynthOptions& options);

}  // namespace codesearch
