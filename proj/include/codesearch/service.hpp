#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codesearch/cascade.hpp"
#include "codesearch/corpus.hpp"
#include "codesearch/index.hpp"
#include "codesearch/vocabulary.hpp"

namespace httplib {
class Server;
}

namespace codesearch {

/// Everything a search needs. Read-only once the service starts.
struct ServiceState {
  ModelF model;
  VectorIndex index;
  Vocabulary vocab;
  std::vector<BimodalPair> snippets;  // aligned with index rows
  CascadeConfig defaults;

  /// Reorders `candidates` to the index rows. Throws std::invalid_argument
  /// when an index id has no candidate.
  static ServiceState assemble(ModelF model, VectorIndex index, Vocabulary vocab,
                               const std::vector<BimodalPair>& candidates, CascadeConfig defaults = {});
};

struct SearchRequest {
  std::string query;
  RetrievalMode mode = RetrievalMode::cascade;
  std::size_t k_rerank = 10;
  std::size_t k_results = 10;

  /// Fills defaults from `defaults`. Throws std::invalid_argument on a bad
  /// field: empty query, unknown mode, k_results outside [1, 100], k_rerank 0.
  static SearchRequest from_json(const nlohmann::json& j, const CascadeConfig& defaults);
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handling for the HTTP API, independent of the transport so the
/// CLI and tests can call it directly.
class SearchService {
 public:
  SearchService() = default;  // not ready: search and meta answer 503
  explicit SearchService(std::shared_ptr<const ServiceState> state);

  bool ready() const { return state_ != nullptr; }
  const ServiceState& state() const { return *state_; }

  /// Ranked list for `request`, truncated to k_results.
  RankedList search(const SearchRequest& request) const;
  nlohmann::json search_json(const SearchRequest& request) const;

  HttpReply handle_search(const std::string& body) const;
  HttpReply handle_meta() const;
  HttpReply handle_health() const { return {200, "ok", "text/plain"}; }

  /// Registers POST /api/search, GET /api/meta and GET /health on `server`,
  /// plus files under `static_dir` when given.
  void mount(httplib::Server& server, const std::string& static_dir = "") const;

  /// Blocks serving the routes of mount(). Returns false if the port cannot
  /// be bound.
  bool serve(const std::string& host, int port, const std::string& static_dir = "") const;

 private:
  std::shared_ptr<const ServiceState> state_;
  std::optional<CascadeSearcher> searcher_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

nlohmann::json model_config_json(const ModelConfig& c);

}  // namespace codesearch
