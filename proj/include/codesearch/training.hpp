#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codesearch/corpus.hpp"
#include "codesearch/encoder.hpp"
#include "codesearch/objective.hpp"
#include "codesearch/optimizer.hpp"

namespace codesearch {

struct TrainConfig {
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::size_t max_epochs = 10;
  std::size_t eval_every = 50;           // batches between dev evaluations; 0 = once per epoch
  std::size_t early_stop_patience = 4;  // evaluations without improvement
  ObjectiveOptions objective;
  std::uint64_t seed = 13;
  // Dev MRR: fast stage for fast_only, cascade with K = dev_k otherwise.
  std::size_t dev_k = 100;
  std::size_t dev_max_queries = 200;  // 0 = the whole dev split
  std::size_t max_steps = 0;          // 0 = no cap
  double time_budget_s = 0;           // 0 = no cap; checked between steps
  std::string log_path;               // JSONL training log; empty disables it

  /// Throws std::invalid_argument on a broken configuration.
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto `*this`; unknown keys throw.
  void merge_json(const nlohmann::json& j);

  /// Learning rate 2e-5 with Adam defaults, the fine-tuning regime of large
  /// pretrained encoders. Too slow for a randomly initialized tiny model.
  static TrainConfig finetune_regime();
};

/// One record of the training log.
struct TrainLogEntry {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0;
  double nce = 0;
  double ce = 0;
  double grad_norm = 0;
  std::optional<double> dev_mrr;
  double wall_s = 0;
  bool eval_only = false;  // a dev evaluation outside a training step

  nlohmann::json to_json() const;
};

struct TrainState {
  ModelF model;
  Adam<float> optimizer;
  std::size_t step = 0;
  std::size_t epoch = 0;
  double best_dev_mrr = -1;
  std::size_t evals_since_improvement = 0;
};

struct TrainResult {
  ModelF model;  // best-dev checkpoint
  double best_dev_mrr = -1;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::string stop_reason;  // patience, max_epochs, max_steps, time_budget, diverged
  std::vector<TrainLogEntry> log;
  double seconds = 0;
};

/// Dev MRR of `model` on `dev` queries against the `pool` candidates.
double dev_mrr(const ModelF& model, const std::vector<BimodalPair>& dev, const std::vector<BimodalPair>& pool,
               LossMode mode, std::size_t dev_k, std::size_t max_queries);

/// Adam training from `initial` with early stopping on dev MRR. Returns the
/// best checkpoint seen; a non-finite loss or gradient stops training and
/// keeps that checkpoint (or the last finite parameters when no evaluation
/// has happened yet). Deterministic for a fixed config.
TrainResult train(const ModelF& initial, const DatasetSplit& data, const TrainConfig& config,
                  const std::function<void(const TrainLogEntry&)>& on_log = {});

}  // namespace codesearch
