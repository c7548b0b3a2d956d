#include "codesearch/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "codesearch/binary_io.hpp"

namespace codesearch {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::fast: return "fast";
    case Stage::cascade: return "cascade";
    case Stage::slow: return "slow";
  }
  return "unknown";
}

VectorIndex::VectorIndex(std::vector<std::string> ids, MatF embeddings, IndexProvenance provenance)
    : ids_(std::move(ids)), embeddings_(std::move(embeddings)), provenance_(provenance) {
  if (static_cast<std::size_t>(embeddings_.rows()) != ids_.size()) {
    throw std::invalid_argument("index: row count does not match id count");
  }
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    if (!row_by_id_.emplace(ids_[r], r).second) throw std::invalid_argument("index: duplicate id '" + ids_[r] + "'");
    const float n = embeddings_.row(static_cast<Eigen::Index>(r)).norm();
    if (!(std::abs(n - 1.0f) <= kUnitTolerance)) {
      throw std::invalid_argument("index: row " + std::to_string(r) + " is not unit-norm (" + std::to_string(n) + ")");
    }
  }
  std::vector<std::uint32_t> by_id(ids_.size());
  std::iota(by_id.begin(), by_id.end(), 0u);
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return ids_[a] < ids_[b]; });
  id_order_.resize(ids_.size());
  for (std::uint32_t i = 0; i < by_id.size(); ++i) id_order_[by_id[i]] = i;
}

std::optional<std::size_t> VectorIndex::row_of(const std::string& id) const {
  auto it = row_by_id_.find(id);
  if (it == row_by_id_.end()) return std::nullopt;
  return it->second;
}

Eigen::VectorXf VectorIndex::similarities(const RowVec<float>& query) const {
  if (static_cast<std::size_t>(query.size()) != dim()) {
    throw std::invalid_argument("index: query has dim " + std::to_string(query.size()) + ", index has " +
                                std::to_string(dim()));
  }
  return embeddings_ * query.transpose();
}

RankedList VectorIndex::top_k(const RowVec<float>& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("top_k: K must be >= 1");
  const Eigen::VectorXf scores = similarities(query);
  std::vector<std::uint32_t> rows(size());
  std::iota(rows.begin(), rows.end(), 0u);
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return id_order_[a] < id_order_[b];
  };
  const std::size_t n = std::min(k, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n), rows.end(), better);

  RankedList out;
  out.stage = Stage::fast;
  out.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RankedEntry e;
    e.row = rows[i];
    e.candidate_id = ids_[rows[i]];
    e.fast_score = scores(rows[i]);
    e.final_rank = i + 1;
    out.entries.push_back(std::move(e));
  }
  return out;
}

std::string VectorIndex::serialize() const {
  ByteWriter w;
  w.bytes("CSIX");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dim()));
  w.u64(size());
  w.u64(provenance_.model_config_hash);
  w.u64(provenance_.corpus_hash);
  for (const auto& id : ids_) w.str(id);
  for (Eigen::Index i = 0; i < embeddings_.size(); ++i) w.f32(embeddings_.data()[i]);
  return w.buffer();
}

void VectorIndex::save(const std::string& path) const { write_file_atomic(path, serialize()); }

VectorIndex VectorIndex::deserialize(std::string_view bytes, std::optional<std::size_t> expected_dim) {
  ByteReader r(bytes, "CSIX index");
  if (bytes.size() < 4 || r.bytes(4) != "CSIX") throw FormatError("not a CSIX index file (bad magic bytes)");
  const auto version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("CSIX index: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  }
  const auto dim = r.u32();
  const auto count = r.u64();
  if (expected_dim && *expected_dim != dim) {
    throw FormatError("CSIX index: dimension " + std::to_string(dim) + " does not match expected " +
                      std::to_string(*expected_dim));
  }
  if (dim == 0) throw FormatError("CSIX index: zero dimension");
  IndexProvenance prov;
  prov.model_config_hash = r.u64();
  prov.corpus_hash = r.u64();
  // Each id needs at least its 4-byte length prefix.
  if (count > r.remaining() / 4) throw FormatError("CSIX index: truncated file (id table)");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(r.str());
  const std::size_t floats = static_cast<std::size_t>(count) * dim;
  if (r.remaining() != floats * 4) {
    throw FormatError("CSIX index: expected " + std::to_string(floats * 4) + " bytes of embeddings, found " +
                      std::to_string(r.remaining()));
  }
  MatF m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < floats; ++i) m.data()[i] = r.f32();
  try {
    return VectorIndex(std::move(ids), std::move(m), prov);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("CSIX index: ") + e.what());
  }
}

VectorIndex VectorIndex::load(const std::string& path, std::optional<std::size_t> expected_dim) {
  return deserialize(read_file(path), expected_dim);
}

IndexBuild build_index(const ModelF& model, const std::vector<BimodalPair>& candidates, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("build_index: batch size must be >= 1");
  Stopwatch sw;
  std::vector<std::string> ids;
  std::vector<RowVec<float>> rows;
  std::vector<std::string> skipped;
  ids.reserve(candidates.size());
  rows.reserve(candidates.size());
  // Each sequence is encoded independently, so batching only groups the work.
  for (std::size_t start = 0; start < candidates.size(); start += batch_size) {
    const std::size_t end = std::min(candidates.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      try {
        rows.push_back(model.encode(candidates[i].pl_tokens, TextMode::pl));
        ids.push_back(candidates[i].id);
      } catch (const std::exception&) {
        skipped.push_back(candidates[i].id);
      }
    }
  }
  if (ids.empty()) throw std::invalid_argument("build_index: no candidate could be encoded");
  MatF m(static_cast<Eigen::Index>(rows.size()), model.config().hidden_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = rows[r];

  std::vector<BimodalPair> kept;
  kept.reserve(ids.size());
  for (std::size_t i = 0, k = 0; i < candidates.size() && k < ids.size(); ++i) {
    if (candidates[i].id == ids[k]) {
      kept.push_back(candidates[i]);
      ++k;
    }
  }
  IndexProvenance prov{model.config().hash(), corpus_hash(kept)};
  IndexBuild out{VectorIndex(std::move(ids), std::move(m), prov), std::move(skipped), 0};
  out.build_seconds = sw.elapsed_s();
  return out;
}

std::optional<std::string> provenance_warning(const VectorIndex& index, const ModelConfig& model_config) {
  if (index.provenance().model_config_hash == model_config.hash()) return std::nullopt;
  return "index was built by model config " + hex64(index.provenance().model_config_hash) +
         " but the loaded model has config " + hex64(model_config.hash());
}

}  // namespace codesearch
