#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "codesearch/common.hpp"
#include "codesearch/corpus.hpp"
#include "codesearch/encoder.hpp"
#include "codesearch/ranked_list.hpp"

namespace codesearch {

struct IndexProvenance {
  std::uint64_t model_config_hash = 0;
  std::uint64_t corpus_hash = 0;
  bool operator==(const IndexProvenance&) const = default;
};

/// Immutable exact-search index over unit-norm code embeddings.
///
/// File layout (little-endian):
///   "CSIX" | u32 version | u32 dim | u64 count | u64 model_config_hash |
///   u64 corpus_hash | count × (u32 length, UTF-8 id) | count × dim f32, row-major
class VectorIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr float kUnitTolerance = 1e-5f;

  /// Throws std::invalid_argument on duplicate ids, a row count that differs
  /// from the id count, or a row that is not unit-norm.
  VectorIndex(std::vector<std::string> ids, MatF embeddings, IndexProvenance provenance);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<std::size_t> row_of(const std::string& id) const;
  const MatF& embeddings() const { return embeddings_; }
  const IndexProvenance& provenance() const { return provenance_; }

  /// Inner product of `query` with every row.
  Eigen::VectorXf similarities(const RowVec<float>& query) const;

  /// The min(K, size) best rows by descending score, ties by ascending
  /// candidate id. Throws std::invalid_argument on dimension mismatch or K = 0.
  RankedList top_k(const RowVec<float>& query, std::size_t k) const;

  void save(const std::string& path) const;
  std::string serialize() const;

  /// Throws FormatError on bad magic, version, truncation or trailing bytes,
  /// and when `expected_dim` is given and differs.
  static VectorIndex load(const std::string& path, std::optional<std::size_t> expected_dim = std::nullopt);
  static VectorIndex deserialize(std::string_view bytes, std::optional<std::size_t> expected_dim = std::nullopt);

 private:
  std::vector<std::string> ids_;
  MatF embeddings_;
  IndexProvenance provenance_;
  std::unordered_map<std::string, std::size_t> row_by_id_;
  std::vector<std::uint32_t> id_order_;  // rank of each row's id in lexicographic order
};

struct IndexBuild {
  VectorIndex index;
  std::vector<std::string> skipped;  // candidates that could not be encoded
  double build_seconds = 0;
};

/// Encodes every candidate's code in fast PL mode, `batch_size` at a time.
/// Candidates that fail to encode are listed in `skipped`; an empty result
/// throws std::invalid_argument.
IndexBuild build_index(const ModelF& model, const std::vector<BimodalPair>& candidates, std::size_t batch_size = 32);

/// Warning text when the index was built by a different model config.
std::optional<std::string> provenance_warning(const VectorIndex& index, const ModelConfig& model_config);

}  // namespace codesearch
