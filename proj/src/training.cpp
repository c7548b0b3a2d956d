#include "codesearch/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "codesearch/cascade.hpp"
#include "codesearch/eval.hpp"
#include "codesearch/index.hpp"

namespace codesearch {

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::fast_only: return "fast_only";
    case LossMode::slow_only: return "slow_only";
    case LossMode::joint: return "joint";
  }
  return "unknown";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "fast_only" || s == "fast") return LossMode::fast_only;
  if (s == "slow_only" || s == "slow") return LossMode::slow_only;
  if (s == "joint") return LossMode::joint;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected fast_only|slow_only|joint)");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
  if (!(adam.learning_rate >= 0) || !std::isfinite(adam.learning_rate)) {
    throw std::invalid_argument("train config: learning_rate must be finite and >= 0");
  }
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.eps > 0)) {
    throw std::invalid_argument("train config: need 0 <= beta < 1 and eps > 0");
  }
  if (max_epochs == 0) throw std::invalid_argument("train config: max_epochs must be >= 1");
  if (early_stop_patience == 0) throw std::invalid_argument("train config: early_stop_patience must be >= 1");
  if (dev_k == 0) throw std::invalid_argument("train config: dev_k must be >= 1");
  if (objective.mode == LossMode::joint) {
    if (objective.w_nce < 0 || objective.w_ce < 0 || std::abs(objective.w_nce + objective.w_ce - 1.0) > 1e-9) {
      throw std::invalid_argument("train config: joint weights must be non-negative and sum to 1");
    }
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"batch_size", batch_size},
      {"learning_rate", adam.learning_rate},
      {"adam_beta1", adam.beta1},
      {"adam_beta2", adam.beta2},
      {"adam_eps", adam.eps},
      {"clip_norm", adam.clip_norm},
      {"max_epochs", max_epochs},
      {"eval_every", eval_every},
      {"early_stop_patience", early_stop_patience},
      {"loss_mode", to_string(objective.mode)},
      {"w_nce", objective.w_nce},
      {"w_ce", objective.w_ce},
      {"symmetric_nce", objective.symmetric_nce},
      {"all_negatives", objective.all_negatives},
      {"seed", seed},
      {"dev_k", dev_k},
      {"dev_max_queries", dev_max_queries},
      {"max_steps", max_steps},
      {"time_budget_s", time_budget_s},
      {"log_path", log_path},
  };
}

void TrainConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "batch_size") batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") adam.learning_rate = v.get<double>();
    else if (key == "adam_beta1") adam.beta1 = v.get<double>();
    else if (key == "adam_beta2") adam.beta2 = v.get<double>();
    else if (key == "adam_eps") adam.eps = v.get<double>();
    else if (key == "clip_norm") adam.clip_norm = v.get<double>();
    else if (key == "max_epochs") max_epochs = v.get<std::size_t>();
    else if (key == "eval_every") eval_every = v.get<std::size_t>();
    else if (key == "early_stop_patience") early_stop_patience = v.get<std::size_t>();
    else if (key == "loss_mode") objective.mode = parse_loss_mode(v.get<std::string>());
    else if (key == "w_nce") objective.w_nce = v.get<double>();
    else if (key == "w_ce") objective.w_ce = v.get<double>();
    else if (key == "symmetric_nce") objective.symmetric_nce = v.get<bool>();
    else if (key == "all_negatives") objective.all_negatives = v.get<bool>();
    else if (key == "seed") seed = v.get<std::uint64_t>();
    else if (key == "dev_k") dev_k = v.get<std::size_t>();
    else if (key == "dev_max_queries") dev_max_queries = v.get<std::size_t>();
    else if (key == "max_steps") max_steps = v.get<std::size_t>();
    else if (key == "time_budget_s") time_budget_s = v.get<double>();
    else if (key == "log_path") log_path = v.get<std::string>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
}

TrainConfig TrainConfig::finetune_regime() {
  TrainConfig c;
  c.adam.learning_rate = 2e-5;
  return c;
}

nlohmann::json TrainLogEntry::to_json() const {
  if (eval_only) {
    nlohmann::json j = {{"step", step}, {"epoch", epoch}, {"wall_s", wall_s}};
    if (dev_mrr) j["dev_mrr"] = *dev_mrr;
    return j;
  }
  nlohmann::json j = {{"step", step},     {"epoch", epoch},         {"loss", loss},
                      {"nce", nce},       {"ce", ce},               {"grad_norm", grad_norm},
                      {"wall_s", wall_s}};
  if (dev_mrr) j["dev_mrr"] = *dev_mrr;
  return j;
}

double dev_mrr(const ModelF& model, const std::vector<BimodalPair>& dev, const std::vector<BimodalPair>& pool,
               LossMode mode, std::size_t dev_k, std::size_t max_queries) {
  const auto built = build_index(model, pool);
  const auto searcher = CascadeSearcher::from_candidates(model, built.index, pool);
  CascadeConfig cfg;
  cfg.k = dev_k;
  cfg.mode = mode == LossMode::fast_only ? RetrievalMode::fast : RetrievalMode::cascade;
  return evaluate(searcher, dev, cfg, {1}, max_queries).mrr;
}

namespace {

bool finite_grads(const Parameters<float>& g) { return all_finite(g); }

}  // namespace

TrainResult train(const ModelF& initial, const DatasetSplit& data, const TrainConfig& config,
                  const std::function<void(const TrainLogEntry&)>& on_log) {
  config.validate();
  check_loss_mode(config.objective.mode, initial.config().variant);
  if (data.train.size() < 2) throw std::invalid_argument("train: need at least two training pairs");
  if (data.dev.empty()) throw std::invalid_argument("train: empty dev split");
  const auto& pool = data.candidates.empty() ? data.dev : data.candidates;

  std::ofstream log_file;
  if (!config.log_path.empty()) {
    log_file.open(config.log_path, std::ios::app);
    if (!log_file) throw std::runtime_error("train: cannot open log file " + config.log_path);
  }

  TrainState state{initial, Adam<float>(initial.params(), config.adam)};
  TrainResult result;
  result.model = initial;
  const Stopwatch clock;
  Parameters<float> grads = initial.params().zeros_like();
  const float dropout = initial.config().dropout;

  auto emit = [&](const TrainLogEntry& e) {
    result.log.push_back(e);
    if (log_file) log_file << e.to_json().dump() << '\n' << std::flush;
    if (on_log) on_log(e);
  };

  // Returns true when patience is exhausted.
  auto evaluate_dev = [&](TrainLogEntry& entry) {
    const double m = dev_mrr(state.model, data.dev, pool, config.objective.mode, config.dev_k, config.dev_max_queries);
    entry.dev_mrr = m;
    if (m > state.best_dev_mrr) {
      state.best_dev_mrr = m;
      state.evals_since_improvement = 0;
      result.model = state.model;
      result.best_dev_mrr = m;
      result.best_step = state.step;
      return false;
    }
    return ++state.evals_since_improvement >= config.early_stop_patience;
  };

  std::string stop;
  bool evaluated_last = false;
  for (state.epoch = 0; state.epoch < config.max_epochs && stop.empty(); ++state.epoch) {
    BatchStream stream(data.train, config.batch_size, mix_seed(config.seed, {state.epoch}));
    std::size_t in_epoch = 0;
    while (auto batch = stream.next()) {
      grads.set_zero();
      const auto loss = batch_objective<float>(state.model, *batch, config.objective, &grads, dropout,
                                               mix_seed(config.seed, {state.epoch, in_epoch, 0xd20u}));
      TrainLogEntry entry;
      entry.step = state.step + 1;
      entry.epoch = state.epoch;
      entry.loss = loss.total;
      entry.nce = loss.nce;
      entry.ce = loss.ce;
      if (!std::isfinite(loss.total) || !finite_grads(grads)) {
        entry.wall_s = clock.elapsed_s();
        emit(entry);
        stop = "diverged";
        // With no checkpoint yet, the parameters before this step are the last good ones.
        if (result.best_dev_mrr < 0) result.model = state.model;
        break;
      }
      entry.grad_norm = state.optimizer.step(state.model.params(), grads);
      ++state.step;
      ++in_epoch;
      evaluated_last = false;
      bool patience_out = false;
      if (config.eval_every && state.step % config.eval_every == 0) {
        patience_out = evaluate_dev(entry);
        evaluated_last = true;
      }
      entry.wall_s = clock.elapsed_s();
      emit(entry);
      if (patience_out) {
        stop = "patience";
        break;
      }
      if (config.max_steps && state.step >= config.max_steps) {
        stop = "max_steps";
        break;
      }
      if (config.time_budget_s > 0 && clock.elapsed_s() >= config.time_budget_s) {
        stop = "time_budget";
        break;
      }
    }
    if (stop.empty() && config.eval_every == 0) {
      TrainLogEntry entry;
      entry.step = state.step;
      entry.epoch = state.epoch;
      entry.eval_only = true;
      if (evaluate_dev(entry)) stop = "patience";
      evaluated_last = true;
      entry.wall_s = clock.elapsed_s();
      emit(entry);
    }
  }
  if (stop.empty()) stop = "max_epochs";
  if (stop != "diverged" && (!evaluated_last || result.best_dev_mrr < 0)) {
    TrainLogEntry entry;
    entry.step = state.step;
    entry.epoch = state.epoch;
    entry.eval_only = true;
    evaluate_dev(entry);
    entry.wall_s = clock.elapsed_s();
    emit(entry);
  }
  result.steps = state.step;
  result.epochs = state.epoch;
  result.stop_reason = stop;
  result.seconds = clock.elapsed_s();
  return result;
}

}  // namespace codesearch
