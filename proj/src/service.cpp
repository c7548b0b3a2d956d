#include "codesearch/service.hpp"

#include <stdexcept>
#include <unordered_map>

#include <httplib.h>

#include "codesearch/tokenizer.hpp"

namespace codesearch {

ServiceState ServiceState::assemble(ModelF model, VectorIndex index, Vocabulary vocab,
                                    const std::vector<BimodalPair>& candidates, CascadeConfig defaults) {
  std::unordered_map<std::string, const BimodalPair*> by_id;
  for (const auto& c : candidates) by_id.emplace(c.id, &c);
  std::vector<BimodalPair> snippets;
  snippets.reserve(index.size());
  for (const auto& id : index.ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("index id '" + id + "' has no entry in the corpus");
    snippets.push_back(*it->second);
  }
  defaults.validate();
  return ServiceState{std::move(model), std::move(index), std::move(vocab), std::move(snippets), defaults};
}

SearchRequest SearchRequest::from_json(const nlohmann::json& j, const CascadeConfig& defaults) {
  if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
  SearchRequest r;
  r.mode = defaults.mode;
  r.k_rerank = defaults.k;
  if (!j.contains("query") || !j["query"].is_string()) throw std::invalid_argument("'query' must be a string");
  r.query = j["query"].get<std::string>();
  if (r.query.find_first_not_of(" \t\r\n") == std::string::npos) throw std::invalid_argument("'query' is empty");
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) throw std::invalid_argument("'mode' must be a string");
    r.mode = parse_retrieval_mode(j["mode"].get<std::string>());
  }
  auto read_count = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (!v.is_number_integer()) throw std::invalid_argument(std::string("'") + key + "' must be an integer");
    const auto n = v.get<long long>();
    if (n < 0) throw std::invalid_argument(std::string("'") + key + "' must be non-negative");
    out = static_cast<std::size_t>(n);
  };
  read_count("k_rerank", r.k_rerank);
  read_count("k_results", r.k_results);
  if (r.k_results < 1 || r.k_results > 100) throw std::invalid_argument("'k_results' must be in [1, 100]");
  if (r.k_rerank < 1) throw std::invalid_argument("'k_rerank' must be >= 1");
  return r;
}

SearchService::SearchService(std::shared_ptr<const ServiceState> state) : state_(std::move(state)) {
  if (!state_) return;
  std::vector<TokenSeq> code;
  code.reserve(state_->snippets.size());
  for (const auto& s : state_->snippets) code.push_back(s.pl_tokens);
  searcher_.emplace(state_->model, state_->index, std::move(code));
}

RankedList SearchService::search(const SearchRequest& request) const {
  if (!ready()) throw std::logic_error("service not ready");
  const TokenSeq query = tokenize(request.query, TextMode::nl, state_->vocab);
  CascadeConfig cfg = state_->defaults;
  cfg.mode = request.mode;
  cfg.k = request.k_rerank;
  cfg.result_size = request.k_results;
  return searcher_->retrieve(query, cfg);
}

nlohmann::json SearchService::search_json(const SearchRequest& request) const {
  const RankedList list = search(request);
  nlohmann::json results = nlohmann::json::array();
  for (const auto& e : list.entries) {
    const auto& snip = state_->snippets.at(e.row);
    nlohmann::json r = {{"id", e.candidate_id},
                        {"docstring", snip.nl_raw},
                        {"code", snip.pl_raw},
                        {"rank", e.final_rank},
                        {"stage", e.rerank_score ? "reranked" : "fast"}};
    r["fast_score"] = e.fast_score ? nlohmann::json(*e.fast_score) : nlohmann::json();
    if (e.rerank_score) r["rerank_score"] = *e.rerank_score;
    results.push_back(std::move(r));
  }
  return {{"query", request.query},
          {"mode", to_string(request.mode)},
          {"k_rerank", request.k_rerank},
          {"k_results", request.k_results},
          {"results", results},
          {"timings",
           {{"encode_ms", list.timing.encode_ms},
            {"lookup_ms", list.timing.lookup_ms},
            {"rerank_ms", list.timing.rerank_ms},
            {"total_ms", list.timing.total_ms}}}};
}

namespace {

HttpReply error_reply(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

}  // namespace

HttpReply SearchService::handle_search(const std::string& body) const {
  if (!ready()) return error_reply(503, "service not ready");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  try {
    const auto request = SearchRequest::from_json(j, state_->defaults);
    return {200, search_json(request).dump()};
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const std::logic_error& e) {
    return error_reply(400, e.what());
  }
}

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers},       {"hidden_dim", c.hidden_dim},   {"num_heads", c.num_heads},
          {"ff_dim", c.ff_dim},               {"vocab_size", c.vocab_size},   {"max_positions", c.max_positions},
          {"head_hidden", c.head_hidden},     {"mode_embeddings", c.mode_embeddings},
          {"variant", to_string(c.variant)}, {"temperature", c.temperature}, {"dropout", c.dropout},
          {"config_hash", hex64(c.hash())}};
}

HttpReply SearchService::handle_meta() const {
  if (!ready()) return error_reply(503, "service not ready");
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  nlohmann::json j = {{"index_size", state_->index.size()},
                      {"model_config", model_config_json(state_->model.config())},
                      {"default_k", state_->defaults.k},
                      {"default_mode", to_string(state_->defaults.mode)},
                      {"can_rerank", state_->model.can_classify()},
                      {"uptime", uptime}};
  return {200, j.dump()};
}

void SearchService::mount(httplib::Server& server, const std::string& static_dir) const {
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Post("/api/search",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, handle_search(req.body)); });
  server.Get("/api/meta", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_meta()); });
  server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_health()); });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw std::invalid_argument("static directory not found: " + static_dir);
  }
}

bool SearchService::serve(const std::string& host, int port, const std::string& static_dir) const {
  httplib::Server server;
  mount(server, static_dir);
  return server.listen(host, port);
}

}  // namespace codesearch
