// codesearch: command-line entry points for the retrieval pipeline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "codesearch/binary_io.hpp"
#include "codesearch/cascade.hpp"
#include "codesearch/corpus.hpp"
#include "codesearch/eval.hpp"
#include "codesearch/index.hpp"
#include "codesearch/model_io.hpp"
#include "codesearch/service.hpp"
#include "codesearch/training.hpp"

namespace fs = std::filesystem;
using namespace codesearch;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string model;
  std::string index;
  std::string corpus;
  std::string vocab;
  std::string config;
  std::string mode = "cascade";
  std::size_t k = 10;
  std::uint64_t seed = 13;
};

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("cannot parse " + path + ": " + e.what());
  }
}

Vocabulary load_vocab_for(const CommonOpts& o) {
  if (!o.vocab.empty()) return Vocabulary::load(o.vocab);
  const auto sidecar = default_vocab_path(o.model);
  if (fs::exists(sidecar)) return Vocabulary::load(sidecar);
  if (!o.corpus.empty() && fs::exists(fs::path(o.corpus) / "vocab.json")) {
    return Vocabulary::load((fs::path(o.corpus) / "vocab.json").string());
  }
  throw std::runtime_error("no vocabulary found; pass --vocab (looked for " + sidecar + ")");
}

void print_warning(const std::string& w) { std::cerr << "warning: " << w << '\n'; }

ModelConfig model_config_from(const json& j, ModelConfig c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "num_layers") c.num_layers = v.get<std::uint32_t>();
    else if (key == "hidden_dim") c.hidden_dim = v.get<std::uint32_t>();
    else if (key == "num_heads") c.num_heads = v.get<std::uint32_t>();
    else if (key == "ff_dim") c.ff_dim = v.get<std::uint32_t>();
    else if (key == "max_positions") c.max_positions = v.get<std::uint32_t>();
    else if (key == "head_hidden") c.head_hidden = v.get<std::uint32_t>();
    else if (key == "mode_embeddings") c.mode_embeddings = v.get<bool>();
    else if (key == "variant") c.variant = parse_variant(v.get<std::string>());
    else if (key == "temperature") c.temperature = v.get<float>();
    else if (key == "dropout") c.dropout = v.get<float>();
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------

int run_synth(const std::string& out, const SynthOptions& opt) {
  const auto pairs = synth_corpus(opt);
  save_jsonl(out, pairs);
  std::cout << "wrote " << pairs.size() << " pairs to " << out << '\n';
  return 0;
}

struct IngestOpts {
  std::string input;
  std::string out;
  std::size_t min_count = 1;
  SplitSizes sizes{100, 200, 200};
};

int run_ingest(const IngestOpts& o, std::uint64_t seed) {
  const auto loaded = load_jsonl(o.input);
  for (const auto& e : loaded.errors) std::cerr << o.input << ":" << e.line << ": " << e.message << '\n';
  if (loaded.records.empty()) throw std::runtime_error("no usable records in " + o.input);
  const auto vocab = Vocabulary::build(loaded.records, o.min_count);
  std::vector<std::string> dropped;
  auto pairs = tokenize_pairs(loaded.records, vocab, SequenceLimits{}, &dropped);
  for (const auto& id : dropped) print_warning("dropped record '" + id + "' (empty after tokenization)");
  const auto split = split_dataset(std::move(pairs), o.sizes, seed);
  save_dataset(o.out, split, vocab);
  std::cout << "dataset " << o.out << ": train " << split.train.size() << ", dev " << split.dev.size() << ", test "
            << split.test.size() << ", pool " << split.candidates.size() << ", vocab " << vocab.size() << '\n';
  return 0;
}

struct TrainOpts {
  std::string variant;
  std::string loss_mode;
  double lr = -1;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  std::size_t eval_every = 0;
  bool eval_every_set = false;
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::size_t heads = 0;
  std::string log;
  bool finetune_regime = false;
};

int run_train(const CommonOpts& c, const TrainOpts& o, bool seed_set) {
  Vocabulary vocab;
  const DatasetSplit data = load_dataset(c.corpus, &vocab);

  // Defaults, then the config file, then flags.
  ModelConfig mc;
  TrainConfig tc = o.finetune_regime ? TrainConfig::finetune_regime() : TrainConfig{};
  if (!c.config.empty()) {
    const json j = read_json_file(c.config);
    for (const auto& [key, v] : j.items()) {
      if (key == "model") mc = model_config_from(v, mc);
      else if (key == "train") tc.merge_json(v);
      else throw std::invalid_argument("config: unknown section '" + key + "' (expected model, train)");
    }
  }
  if (!o.variant.empty()) mc.variant = parse_variant(o.variant);
  if (o.layers) mc.num_layers = static_cast<std::uint32_t>(o.layers);
  if (o.hidden) mc.hidden_dim = static_cast<std::uint32_t>(o.hidden);
  if (o.heads) mc.num_heads = static_cast<std::uint32_t>(o.heads);
  mc.vocab_size = static_cast<std::uint32_t>(vocab.size());
  if (!o.loss_mode.empty()) tc.objective.mode = parse_loss_mode(o.loss_mode);
  if (o.lr >= 0) tc.adam.learning_rate = o.lr;
  if (o.epochs) tc.max_epochs = o.epochs;
  if (o.batch_size) tc.batch_size = o.batch_size;
  if (o.eval_every_set) tc.eval_every = o.eval_every;
  if (!o.log.empty()) tc.log_path = o.log;
  if (seed_set) tc.seed = c.seed;
  // The shared-tower joint loss is the default; the other variants train with
  // the losses they can run.
  if (mc.variant == Variant::fast_only && o.loss_mode.empty()) tc.objective.mode = LossMode::fast_only;

  auto report = [](const TrainLogEntry& e) {
    if (e.dev_mrr) {
      std::fprintf(stderr, "step %zu epoch %zu dev_mrr %.4f (%.1fs)\n", e.step, e.epoch, *e.dev_mrr, e.wall_s);
    } else if (e.step % 25 == 0) {
      std::fprintf(stderr, "step %zu epoch %zu loss %.4f nce %.4f ce %.4f\n", e.step, e.epoch, e.loss, e.nce, e.ce);
    }
  };

  ModelF model = ModelF::random(mc, tc.seed);
  TrainResult result;
  if (mc.variant == Variant::separate && o.loss_mode.empty()) {
    // Two independent phases: fast tower on infoNCE, then slow tower and head on BCE.
    TrainConfig fast_cfg = tc;
    fast_cfg.objective.mode = LossMode::fast_only;
    std::cerr << "phase 1: fast tower (fast_only loss)\n";
    const auto fast = train(model, data, fast_cfg, report);
    TrainConfig slow_cfg = tc;
    slow_cfg.objective.mode = LossMode::slow_only;
    slow_cfg.seed = mix_seed(tc.seed, {2});
    std::cerr << "phase 2: slow tower and head (slow_only loss)\n";
    result = train(fast.model, data, slow_cfg, report);
  } else {
    result = train(model, data, tc, report);
  }
  save_model(c.model, result.model);
  vocab.save(c.vocab.empty() ? default_vocab_path(c.model) : c.vocab);
  json summary = {{"model", c.model},
                  {"variant", to_string(mc.variant)},
                  {"parameters", result.model.params().count()},
                  {"best_dev_mrr", result.best_dev_mrr},
                  {"best_step", result.best_step},
                  {"steps", result.steps},
                  {"stop_reason", result.stop_reason},
                  {"seconds", result.seconds},
                  {"train_config", tc.to_json()}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

std::vector<BimodalPair> pool_from_corpus(const std::string& corpus, Vocabulary* vocab) {
  if (fs::is_directory(corpus)) return load_dataset(corpus, vocab).candidates;
  throw std::runtime_error("--corpus must be a dataset directory written by `ingest`: " + corpus);
}

int run_build_index(const CommonOpts& c, std::size_t batch_size) {
  const ModelF model = load_model(c.model);
  const auto pool = pool_from_corpus(c.corpus, nullptr);
  const auto built = build_index(model, pool, batch_size);
  for (const auto& id : built.skipped) print_warning("skipped candidate '" + id + "'");
  built.index.save(c.index);
  const json meta = {{"index_size", built.index.size()},
                     {"dim", built.index.dim()},
                     {"build_seconds", built.build_seconds},
                     {"skipped", built.skipped},
                     {"model_config_hash", hex64(built.index.provenance().model_config_hash)},
                     {"corpus_hash", hex64(built.index.provenance().corpus_hash)}};
  write_file_atomic(c.index + ".meta.json", meta.dump(2) + "\n");
  std::cout << meta.dump(2) << '\n';
  return 0;
}

struct Loaded {
  std::shared_ptr<const ServiceState> state;
  std::vector<BimodalPair> test;
  double index_build_seconds = -1;
};

Loaded load_all(const CommonOpts& c, bool need_test) {
  ModelF model = load_model(c.model);
  VectorIndex index = VectorIndex::load(c.index, model.config().hidden_dim);
  if (auto w = provenance_warning(index, model.config())) print_warning(*w);
  Vocabulary vocab = load_vocab_for(c);
  if (vocab.size() != model.config().vocab_size) {
    throw std::runtime_error("vocabulary has " + std::to_string(vocab.size()) + " tokens, model expects " +
                             std::to_string(model.config().vocab_size));
  }
  Loaded out;
  Vocabulary data_vocab;
  const DatasetSplit data = load_dataset(c.corpus, &data_vocab);
  if (!(data_vocab == vocab)) print_warning("corpus vocabulary differs from the model vocabulary");
  if (corpus_hash(data.candidates) != index.provenance().corpus_hash) {
    print_warning("index was built from a different candidate pool than " + c.corpus);
  }
  if (need_test) out.test = data.test;
  CascadeConfig defaults;
  defaults.mode = parse_retrieval_mode(c.mode);
  defaults.k = c.k;
  out.state = std::make_shared<const ServiceState>(
      ServiceState::assemble(std::move(model), std::move(index), std::move(vocab), data.candidates, defaults));
  const auto meta_path = c.index + ".meta.json";
  if (fs::exists(meta_path)) out.index_build_seconds = read_json_file(meta_path).value("build_seconds", -1.0);
  return out;
}

int run_search(const CommonOpts& c, const std::string& query, std::size_t results, bool as_json) {
  const auto loaded = load_all(c, false);
  const SearchService service(loaded.state);
  SearchRequest req;
  req.query = query;
  req.mode = parse_retrieval_mode(c.mode);
  req.k_rerank = c.k;
  req.k_results = results;
  if (as_json) {
    std::cout << service.search_json(req).dump(2) << '\n';
    return 0;
  }
  const RankedList list = service.search(req);
  std::printf("%-5s %-28s %-10s %-10s %s\n", "rank", "id", "fast", "rerank", "docstring");
  for (const auto& e : list.entries) {
    const auto& snip = loaded.state->snippets.at(e.row);
    std::string doc = snip.nl_raw.substr(0, 60);
    std::replace(doc.begin(), doc.end(), '\n', ' ');
    const std::string fast = e.fast_score ? std::to_string(*e.fast_score).substr(0, 8) : "-";
    const std::string rer = e.rerank_score ? std::to_string(*e.rerank_score).substr(0, 8) : "-";
    std::printf("%-5zu %-28s %-10s %-10s %s\n", e.final_rank, e.candidate_id.c_str(), fast.c_str(), rer.c_str(),
                doc.c_str());
  }
  std::printf("encode %.2f ms, lookup %.2f ms, rerank %.2f ms, total %.2f ms\n", list.timing.encode_ms,
              list.timing.lookup_ms, list.timing.rerank_ms, list.timing.total_ms);
  return 0;
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("--ks expects comma-separated positive integers, got '" + s + "'");
    }
    ks.push_back(std::stoul(part));
  }
  return ks;
}

int run_eval(const CommonOpts& c, const std::string& ks, std::size_t max_queries, std::size_t result_size) {
  const auto loaded = load_all(c, true);
  const auto searcher = CascadeSearcher::from_candidates(loaded.state->model, loaded.state->index, loaded.state->snippets);
  CascadeConfig cfg = loaded.state->defaults;
  cfg.result_size = result_size;
  const auto report = evaluate(searcher, loaded.test, cfg, parse_ks(ks), max_queries);
  for (const auto& e : report.excluded) print_warning("query '" + e.query_id + "' excluded: " + e.reason);
  std::cout << report.to_json().dump(2) << '\n';
  return 0;
}

int run_bench(const CommonOpts& c, const std::string& modes, std::size_t n_queries, std::size_t slow_queries,
              const std::string& format) {
  const auto loaded = load_all(c, true);
  const auto searcher = CascadeSearcher::from_candidates(loaded.state->model, loaded.state->index, loaded.state->snippets);
  std::vector<BenchConfig> configs;
  std::stringstream ss(modes);
  std::string m;
  while (std::getline(ss, m, ',')) {
    auto cfg = parse_bench_method(m);
    if (cfg.cascade.mode == RetrievalMode::slow_full) cfg.max_queries = slow_queries;
    configs.push_back(cfg);
  }
  double build_s = loaded.index_build_seconds;
  if (build_s < 0) {
    // No build record next to the index: time a rebuild, which is not part of the per-query figures.
    build_s = build_index(loaded.state->model, loaded.state->snippets).build_seconds;
  }
  const auto report = bench(searcher, loaded.test, configs, n_queries, build_s);
  if (format == "json") {
    std::cout << report.to_json().dump(2) << '\n';
  } else {
    std::cout << report.to_csv();
    std::fprintf(stderr, "index: %zu candidates, built in %.3f s (not included above)\n", report.index_size,
                 report.index_build_seconds);
  }
  return 0;
}

int run_serve(const CommonOpts& c, int port, const std::string& host, const std::string& static_dir) {
  const auto loaded = load_all(c, false);
  const SearchService service(loaded.state);
  std::fprintf(stderr, "serving %zu candidates on http://%s:%d\n", loaded.state->index.size(), host.c_str(), port);
  if (!service.serve(host, port, static_dir)) throw std::runtime_error("cannot listen on port " + std::to_string(port));
  return 0;
}

int default_port() {
  if (const char* p = std::getenv("CODESEARCH_PORT")) {
    try {
      return std::stoi(p);
    } catch (const std::exception&) {
      print_warning(std::string("ignoring CODESEARCH_PORT=") + p);
    }
  }
  return 8080;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic code search with a fast embedding stage and a reranking classifier"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for all subcommands");

  CommonOpts c;
  bool seed_set = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str()->each([&](const std::string&) {
      seed_set = true;
    });
  };
  auto add_model = [&](CLI::App* sub) { return sub->add_option("--model", c.model, "Model file (.csmd)")->required(); };
  auto add_corpus = [&](CLI::App* sub) {
    return sub->add_option("--corpus", c.corpus, "Dataset directory written by `ingest`")->required();
  };
  auto add_retrieval = [&](CLI::App* sub) {
    add_model(sub);
    sub->add_option("--index", c.index, "Index file (.csix)")->required();
    add_corpus(sub);
    sub->add_option("--vocab", c.vocab, "Vocabulary JSON (default: <model>.vocab.json)");
    sub->add_option("--mode", c.mode, "fast | cascade | slow")
        ->capture_default_str()
        ->check(CLI::IsMember({"fast", "cascade", "slow", "slow_full"}));
    sub->add_option("--k", c.k, "Candidates reranked in cascade mode")->capture_default_str()->check(CLI::PositiveNumber);
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic docstring/code JSONL corpus");
  std::string synth_out;
  SynthOptions synth_opt;
  synth->add_option("--out", synth_out, "Output JSONL file")->required();
  synth->add_option("--pairs", synth_opt.n_pairs, "Number of pairs")->capture_default_str();
  synth->add_option("--concepts", synth_opt.n_concepts, "Number of concept keywords")->capture_default_str();
  synth->add_option("--objects", synth_opt.n_objects, "Number of object words (max 40)")->capture_default_str();
  synth->add_option("--qualifiers", synth_opt.n_qualifiers, "Number of qualifier words (max 24)")
      ->capture_default_str();
  synth->add_option("--distractor-rate", synth_opt.distractor_rate, "Filler word rate")->capture_default_str();
  synth->add_option("--seed", synth_opt.seed, "Random seed")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Tokenize a JSONL corpus into a train/dev/test dataset with a vocabulary");
  IngestOpts ing;
  ingest->add_option("--input", ing.input, "JSONL with id, docstring, code")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ing.out, "Dataset directory")->required();
  ingest->add_option("--min-count", ing.min_count, "Minimum token count for the vocabulary")->capture_default_str();
  ingest->add_option("--dev", ing.sizes.dev, "Dev queries")->capture_default_str();
  ingest->add_option("--test", ing.sizes.test, "Test queries")->capture_default_str();
  ingest->add_option("--pool-extra", ing.sizes.pool_extra, "Pool-only distractor candidates")->capture_default_str();
  add_seed(ingest);

  // train
  auto* trn = app.add_subcommand("train", "Train a model; flags override --config, which overrides defaults");
  TrainOpts to;
  add_corpus(trn);
  trn->add_option("--model", c.model, "Output model file")->required();
  trn->add_option("--config", c.config, "JSON config with optional \"model\" and \"train\" sections")
      ->check(CLI::ExistingFile);
  trn->add_option("--vocab", c.vocab, "Where to write the vocabulary (default: <model>.vocab.json)");
  trn->add_option("--variant", to.variant, "fast_only | shared | separate (default shared)");
  trn->add_option("--loss-mode", to.loss_mode, "fast_only | slow_only | joint (default joint)");
  trn->add_option("--lr", to.lr, "Learning rate (default 3e-4)");
  trn->add_option("--epochs", to.epochs, "Maximum epochs (default 10)");
  trn->add_option("--batch-size", to.batch_size, "Batch size (default 32)");
  trn->add_option("--eval-every", to.eval_every, "Batches between dev evaluations; 0 = per epoch (default 50)")
      ->each([&](const std::string&) { to.eval_every_set = true; });
  trn->add_option("--layers", to.layers, "Transformer layers (default 2)");
  trn->add_option("--hidden", to.hidden, "Hidden size (default 64)");
  trn->add_option("--heads", to.heads, "Attention heads (default 4)");
  trn->add_option("--log", to.log, "Append the JSONL training log here");
  trn->add_flag("--finetune-regime", to.finetune_regime, "Start from the lr 2e-5 fine-tuning preset");
  add_seed(trn);

  // build-index
  auto* bidx = app.add_subcommand("build-index", "Encode the candidate pool into an index file");
  std::size_t index_batch = 32;
  add_model(bidx);
  add_corpus(bidx);
  bidx->add_option("--index", c.index, "Output index file")->required();
  bidx->add_option("--batch-size", index_batch, "Encoding batch size")->capture_default_str();

  // search
  auto* srch = app.add_subcommand("search", "Run one query and print the ranked candidates");
  std::string query;
  std::size_t results = 10;
  bool search_json = false;
  add_retrieval(srch);
  srch->add_option("-q,--query", query, "Natural-language query")->required();
  srch->add_option("--results", results, "Rows to print (1-100)")->capture_default_str()->check(CLI::Range(1, 100));
  srch->add_flag("--json", search_json, "Print the HTTP API response body instead of a table");

  // eval
  auto* evl = app.add_subcommand("eval", "MRR and Recall@K on the test split, as JSON");
  std::string ks = "1,2,5,8,10";
  std::size_t max_queries = 0;
  std::size_t result_size = 0;
  add_retrieval(evl);
  evl->add_option("--ks", ks, "Recall cutoffs")->capture_default_str();
  evl->add_option("--max-queries", max_queries, "Evaluate at most this many queries (0 = all)")->capture_default_str();
  evl->add_option("--result-size", result_size, "Truncate each ranking (0 = full ordering)")->capture_default_str();

  // bench
  auto* bch = app.add_subcommand("bench", "Per-query latency and throughput for several retrieval modes");
  std::string modes = "fast,cascade10,cascade100,slow";
  std::size_t bench_queries = 100;
  std::size_t slow_queries = 20;
  std::string format = "csv";
  add_retrieval(bch);
  bch->add_option("--modes", modes, "Comma-separated: fast, cascade<K>, slow")->capture_default_str();
  bch->add_option("--queries", bench_queries, "Timed queries per mode")->capture_default_str();
  bch->add_option("--slow-queries", slow_queries, "Timed queries for slow")->capture_default_str();
  bch->add_option("--format", format, "csv | json")->capture_default_str()->check(CLI::IsMember({"csv", "json"}));

  // serve
  auto* srv = app.add_subcommand("serve", "Start the HTTP JSON API");
  int port = default_port();
  std::string host = "127.0.0.1";
  std::string static_dir;
  add_retrieval(srv);
  srv->add_option("--port", port, "Port (env CODESEARCH_PORT)")->capture_default_str();
  srv->add_option("--host", host, "Bind address")->capture_default_str();
  srv->add_option("--static", static_dir, "Serve the web console from this directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_out, synth_opt);
    if (*ingest) return run_ingest(ing, c.seed);
    if (*trn) return run_train(c, to, seed_set);
    if (*bidx) return run_build_index(c, index_batch);
    if (*srch) return run_search(c, query, results, search_json);
    if (*evl) return run_eval(c, ks, max_queries, result_size);
    if (*bch) return run_bench(c, modes, bench_queries, slow_queries, format);
    if (*srv) return run_serve(c, port, host, static_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
