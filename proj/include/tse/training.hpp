#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "tse/checkpoint.hpp"
#include "tse/data.hpp"
#include "tse/embedder.hpp"
#include "tse/exformer.hpp"
#include "tse/losses.hpp"
#include "tse/scheduler.hpp"

namespace tse {

struct TrainConfig {
  int batch_size = 1;
  double init_lr = 1.5e-4;
  double lr_floor = 1e-6;
  int plateau_patience = 2;
  int scheduler_start_epoch = 85;
  int max_epochs = 200;
  int epoch_draws = 200;        // items per epoch under dynamic mixing
  double unlabeled_prob = 0.0;  // p, stage 2 only
  double grad_clip = 5.0;       // global norm; <= 0 disables
  std::uint64_t seed = 0;
  LossWeights loss;

  // Stage-2 defaults: lower initial rate, earlier scheduler start.
  static TrainConfig stage1() { return {}; }
  static TrainConfig stage2();

  PlateauConfig plateau() const;
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct EvalReport {
  double mean_si_sdr = 0.0;   // dB, estimate vs target
  double mean_si_sdri = 0.0;  // dB, minus the mixture's SI-SDR
  std::size_t n_items = 0;
};

nlohmann::json to_json(const EvalReport& r);

using TargetEstimator = std::function<Waveform(const TrainItem&)>;

// Scores an arbitrary estimator on labeled items.
EvalReport evaluate(const std::vector<TrainItem>& items, const TargetEstimator& estimator);
EvalReport evaluate(Exformer& model, Embedder& embedder, const std::vector<TrainItem>& items);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double mean_si_sdri = 0.0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainOutputs {
  std::optional<std::filesystem::path> out_dir;  // best.ckpt, last.ckpt, train_log.jsonl
  bool resume = false;                           // continue from out_dir/last.ckpt
  // Called after every optimiser step with (global step, training loss).
  std::function<void(std::int64_t, double)> on_step;
  // Called once weights and optimiser are in place, before the first step,
  // with the model and the learning rate the optimiser starts from.
  std::function<void(Exformer&, double)> on_start;
};

struct TrainResult {
  Checkpoint best;
  double best_val = 0.0;
  std::vector<EpochLog> log;
  std::vector<double> step_losses;
  SchedulerState scheduler;
};

// Whether the index-th draw of a semi-supervised run comes from the unlabeled
// stream: a seeded Bernoulli(p) per item.
bool draw_unlabeled(std::uint64_t seed, std::uint64_t index, double p);

// Stage 1: negative SI-SDR on labeled items only. The embedder stays frozen.
TrainResult train_supervised(Exformer& model, Embedder& embedder, const ItemSource& labeled,
                             const std::vector<TrainItem>& validation, const TrainConfig& cfg,
                             const TrainOutputs& outputs = {});

// Stage 2: starts from the stage-1 weights in `stage1` with a fresh
// optimiser; every item is unlabeled with probability cfg.unlabeled_prob and
// the objective is the semi-supervised loss. Validation stays labeled-only.
// `model` receives the restored weights and is trained in place.
TrainResult train_semi(const Checkpoint& stage1, Exformer& model, Embedder& embedder,
                       const ItemSource& labeled, const ItemSource& unlabeled,
                       const std::vector<TrainItem>& validation, const TrainConfig& cfg,
                       const TrainOutputs& outputs = {});

// Builds a freshly initialised extractor; initialisation is seeded.
Exformer make_exformer(const ExformerConfig& cfg, std::uint64_t seed);

}  // namespace tse
