#pragma once

#include <optional>
#include <string>
#include <vector>

namespace codesearch {

enum class Stage { fast, cascade, slow };

std::string to_string(Stage s);

struct RankedEntry {
  std::size_t row = 0;  // index row of the candidate
  std::string candidate_id;
  std::optional<float> fast_score;    // cosine from the fast stage
  std::optional<float> rerank_score;  // classifier probability
  std::size_t final_rank = 0;         // 1-based
};

struct StageTimings {
  double encode_ms = 0;
  double lookup_ms = 0;
  double rerank_ms = 0;
  double total_ms = 0;  // wall clock around the whole retrieval
};

// Results for one query. Ranks are 1..n without gaps and ids are unique.
struct RankedList {
  std::string query_id;
  Stage stage = Stage::fast;
  std::vector<RankedEntry> entries;
  StageTimings timing;

  void renumber() {
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].final_rank = i + 1;
  }

  std::optional<std::size_t> rank_of(const std::string& candidate_id) const {
    for (const auto& e : entries) {
      if (e.candidate_id == candidate_id) return e.final_rank;
    }
    return std::nullopt;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.candidate_id);
    return out;
  }
};

}  // namespace codesearch
