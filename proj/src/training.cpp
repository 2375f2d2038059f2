#include "tse/training.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "tse/error.hpp"
#include "tse/json_util.hpp"
#include "tse/metrics.hpp"

namespace tse {

using nlohmann::json;

namespace {

torch::Tensor as_tensor(const Waveform& w) {
  return torch::from_blob(const_cast<float*>(w.samples.data()),
                          {static_cast<std::int64_t>(w.size())}, torch::kFloat32)
      .clone();
}

torch::Tensor enrollment_embedding(Embedder& embedder, const TrainItem& item) {
  torch::NoGradGuard no_grad;
  return embedder->forward(as_tensor(item.enrollment).unsqueeze(0));
}

// [2, L]: row 0 target estimate, row 1 residual estimate.
torch::Tensor separate(Exformer& model, Embedder& embedder, const TrainItem& item) {
  return model->forward(as_tensor(item.mixture).unsqueeze(0), enrollment_embedding(embedder, item))
      .estimates.squeeze(0);
}

struct Validation {
  double loss = 0.0;
  double si_sdri = 0.0;
};

Validation validate(Exformer& model, Embedder& embedder, const std::vector<TrainItem>& items) {
  require(!items.empty(), Errc::kInsufficientData, "validation set is empty");
  torch::NoGradGuard no_grad;
  model->eval();
  Validation v;
  for (const auto& item : items) {
    require(item.labeled, Errc::kInvalidArgument, "validation items must be labeled");
    auto est = separate(model, embedder, item);
    v.loss += si_sdr_loss(as_tensor(*item.target), as_tensor(*item.residual), est[0], est[1])
                  .item<double>();
    auto row = est[0].contiguous();
    std::span<const float> est_t(row.data_ptr<float>(), static_cast<std::size_t>(row.numel()));
    v.si_sdri += si_sdr(item.target->view(), est_t) - si_sdr(item.target->view(), item.mixture.view());
  }
  const auto n = static_cast<double>(items.size());
  v.loss /= n;
  v.si_sdri /= n;
  model->train();
  return v;
}

void set_lr(torch::optim::Adam& adam, double lr) {
  for (auto& group : adam.param_groups()) group.options().set_lr(lr);
}

void export_adam(torch::optim::Adam& adam, Exformer& model, Checkpoint& ckpt) {
  auto& state = adam.state();
  for (const auto& p : model->named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
    const std::string base = "optim/" + p.key();
    ckpt.arrays[base + "/exp_avg"] = st.exp_avg().clone();
    ckpt.arrays[base + "/exp_avg_sq"] = st.exp_avg_sq().clone();
    ckpt.arrays[base + "/step"] = torch::full({}, st.step(), torch::kInt64);
  }
}

void import_adam(torch::optim::Adam& adam, Exformer& model, const Checkpoint& ckpt) {
  auto& state = adam.state();
  for (const auto& p : model->named_parameters()) {
    const std::string base = "optim/" + p.key();
    if (!ckpt.has(base + "/step")) continue;
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(ckpt.at(base + "/step").item<std::int64_t>());
    st->exp_avg(ckpt.at(base + "/exp_avg").clone());
    st->exp_avg_sq(ckpt.at(base + "/exp_avg_sq").clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(st);
  }
}

struct Loop {
  const char* stage;
  const ItemSource* labeled;
  const ItemSource* unlabeled;  // null in stage 1
};

TrainResult run_loop(Exformer& model, Embedder& embedder, const Loop& loop,
                     const std::vector<TrainItem>& validation, const TrainConfig& cfg,
                     const TrainOutputs& outputs) {
  cfg.validate();
  freeze(embedder);
  model->train();

  auto params = model->parameters();
  torch::optim::Adam adam(params, torch::optim::AdamOptions(cfg.init_lr));
  TrainResult res;
  res.scheduler.current_lr = cfg.init_lr;
  res.best_val = std::numeric_limits<double>::infinity();
  int first_epoch = 1;
  std::int64_t step = 0;

  std::optional<std::filesystem::path> dir = outputs.out_dir;
  if (dir) std::filesystem::create_directories(*dir);
  if (dir && outputs.resume && std::filesystem::exists(*dir / "last.ckpt")) {
    const auto last = Checkpoint::load(*dir / "last.ckpt");
    require(last.meta.contains("train_state") && last.meta["train_state"].value("stage", "") == loop.stage,
            Errc::kCheckpointMismatch, "last.ckpt does not belong to this training stage");
    require(last.meta.at("exformer") == to_json(model->config()), Errc::kCheckpointMismatch,
            "last.ckpt was written for a different model configuration");
    import_module(*model, "exformer", last);
    import_adam(adam, model, last);
    const auto& ts = last.meta.at("train_state");
    first_epoch = ts.at("epoch").get<int>() + 1;
    step = ts.at("step").get<std::int64_t>();
    res.scheduler.current_lr = ts.at("lr").get<double>();
    res.scheduler.epochs_since_improve = ts.at("epochs_since_improve").get<int>();
    if (ts.contains("best_val")) {
      res.best_val = res.scheduler.best_val = ts.at("best_val").get<double>();
      res.best = Checkpoint::load(*dir / "best.ckpt");
    }
  }

  std::ofstream log_file;
  if (dir) {
    log_file.open(*dir / "train_log.jsonl", first_epoch > 1 ? std::ios::app : std::ios::trunc);
    if (!log_file) fail(Errc::kIo, "cannot write training log in " + dir->string());
  }
  if (outputs.on_start) outputs.on_start(model, res.scheduler.current_lr);

  const int steps_per_epoch = cfg.epoch_draws / cfg.batch_size;
  for (int epoch = first_epoch; epoch <= cfg.max_epochs; ++epoch) {
    set_lr(adam, res.scheduler.current_lr);
    double epoch_loss = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      adam.zero_grad();
      double batch_loss = 0.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto index = static_cast<std::uint64_t>(epoch - 1) * cfg.epoch_draws +
                           static_cast<std::uint64_t>(s) * cfg.batch_size + b;
        const bool unlabeled =
            loop.unlabeled != nullptr && draw_unlabeled(cfg.seed, index, cfg.unlabeled_prob);
        const TrainItem item = unlabeled ? loop.unlabeled->draw(index) : loop.labeled->draw(index);
        const auto z_e = enrollment_embedding(embedder, item);
        auto est = model->forward(as_tensor(item.mixture).unsqueeze(0), z_e).estimates.squeeze(0);
        torch::Tensor loss;
        if (loop.unlabeled == nullptr) {
          loss = si_sdr_loss(as_tensor(*item.target), as_tensor(*item.residual), est[0], est[1]);
        } else {
          loss = semi_supervised_loss(item, est[0], est[1], embedder, cfg.loss, z_e).total;
        }
        const double value = loss.item<double>();
        require(std::isfinite(value), Errc::kNonFinite,
                std::string(loop.stage) + ": non-finite loss at epoch " + std::to_string(epoch) +
                    ", step " + std::to_string(step) + " (item " + std::to_string(index) + ")");
        (loss / static_cast<double>(cfg.batch_size)).backward();
        batch_loss += value / cfg.batch_size;
      }
      if (cfg.grad_clip > 0) torch::nn::utils::clip_grad_norm_(params, cfg.grad_clip);
      adam.step();
      ++step;
      epoch_loss += batch_loss;
      res.step_losses.push_back(batch_loss);
      if (outputs.on_step) outputs.on_step(step, batch_loss);
    }

    const Validation val = validate(model, embedder, validation);
    const bool improved = val.loss < res.best_val;
    EpochLog entry{epoch, res.scheduler.current_lr, epoch_loss / steps_per_epoch, val.loss, val.si_sdri};
    res.scheduler = scheduler_step(res.scheduler, val.loss, epoch, cfg.plateau());
    if (improved) {
      res.best_val = val.loss;
      res.best = exformer_checkpoint(model, embedder);
      res.best.meta["stage"] = loop.stage;
      res.best.meta["epoch"] = epoch;
      res.best.meta["train"] = to_json(cfg);
      if (dir) res.best.save(*dir / "best.ckpt");
    }
    res.log.push_back(entry);
    if (dir) {
      log_file << to_json(entry).dump() << '\n';
      log_file.flush();
      Checkpoint last = exformer_checkpoint(model, embedder);
      last.meta["train"] = to_json(cfg);
      last.meta["train_state"] = {{"stage", loop.stage},
                                  {"epoch", epoch},
                                  {"step", step},
                                  {"lr", res.scheduler.current_lr},
                                  {"epochs_since_improve", res.scheduler.epochs_since_improve}};
      if (std::isfinite(res.best_val)) last.meta["train_state"]["best_val"] = res.best_val;
      export_adam(adam, model, last);
      last.save(*dir / "last.ckpt");
    }
  }
  return res;
}

}  // namespace

TrainConfig TrainConfig::stage2() {
  TrainConfig cfg;
  cfg.init_lr = 7.5e-5;
  cfg.scheduler_start_epoch = 65;
  return cfg;
}

PlateauConfig TrainConfig::plateau() const {
  PlateauConfig p;
  p.lr_floor = lr_floor;
  p.patience = plateau_patience;
  p.start_epoch = scheduler_start_epoch;
  return p;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, Errc::kConfig, "batch_size must be at least 1");
  require(epoch_draws >= batch_size, Errc::kConfig, "epoch_draws must cover at least one batch");
  require(init_lr > lr_floor && lr_floor > 0, Errc::kConfig, "need init_lr > lr_floor > 0");
  require(unlabeled_prob >= 0.0 && unlabeled_prob <= 1.0, Errc::kConfig,
          "unlabeled_prob must lie in [0, 1]");
  require(plateau_patience >= 1 && max_epochs >= 0, Errc::kConfig, "invalid epoch settings");
}

json to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},
          {"init_lr", cfg.init_lr},
          {"lr_floor", cfg.lr_floor},
          {"plateau_patience", cfg.plateau_patience},
          {"scheduler_start_epoch", cfg.scheduler_start_epoch},
          {"max_epochs", cfg.max_epochs},
          {"epoch_draws", cfg.epoch_draws},
          {"unlabeled_prob", cfg.unlabeled_prob},
          {"grad_clip", cfg.grad_clip},
          {"seed", cfg.seed},
          {"loss", to_json(cfg.loss)}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  json loss = to_json(cfg.loss);
  ConfigReader(j, "train")
      .get("batch_size", cfg.batch_size)
      .get("init_lr", cfg.init_lr)
      .get("lr_floor", cfg.lr_floor)
      .get("plateau_patience", cfg.plateau_patience)
      .get("scheduler_start_epoch", cfg.scheduler_start_epoch)
      .get("max_epochs", cfg.max_epochs)
      .get("epoch_draws", cfg.epoch_draws)
      .get("unlabeled_prob", cfg.unlabeled_prob)
      .get("grad_clip", cfg.grad_clip)
      .get("seed", cfg.seed)
      .get("loss", loss)
      .finish();
  cfg.loss = loss_weights_from_json(loss);
  cfg.validate();
  return cfg;
}

json to_json(const EvalReport& r) {
  return {{"mean_si_sdr", r.mean_si_sdr}, {"mean_si_sdri", r.mean_si_sdri}, {"n_items", r.n_items}};
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"lr", e.lr},
          {"train_loss", e.train_loss},
          {"val_loss", e.val_loss},
          {"mean_si_sdri", e.mean_si_sdri}};
}

EvalReport evaluate(const std::vector<TrainItem>& items, const TargetEstimator& estimator) {
  require(!items.empty(), Errc::kInsufficientData, "evaluation set is empty");
  EvalReport r;
  for (const auto& item : items) {
    require(item.labeled && item.target.has_value(), Errc::kInvalidArgument,
            "evaluation items must be labeled");
    const Waveform est = estimator(item);
    const double score = si_sdr(*item.target, est);
    r.mean_si_sdr += score;
    r.mean_si_sdri += score - si_sdr(*item.target, item.mixture);
  }
  r.n_items = items.size();
  r.mean_si_sdr /= static_cast<double>(r.n_items);
  r.mean_si_sdri /= static_cast<double>(r.n_items);
  require(std::isfinite(r.mean_si_sdr) && std::isfinite(r.mean_si_sdri), Errc::kNonFinite,
          "evaluation produced non-finite scores");
  return r;
}

EvalReport evaluate(Exformer& model, Embedder& embedder, const std::vector<TrainItem>& items) {
  return evaluate(items, [&](const TrainItem& item) {
    return extract(model, embedder, item.mixture, item.enrollment).target;
  });
}

bool draw_unlabeled(std::uint64_t seed, std::uint64_t index, double p) {
  std::seed_seq seq{static_cast<unsigned>(seed), static_cast<unsigned>(seed >> 32),
                    static_cast<unsigned>(index), static_cast<unsigned>(index >> 32), 0xb3u};
  std::mt19937_64 rng(seq);
  return std::bernoulli_distribution(p)(rng);
}

TrainResult train_supervised(Exformer& model, Embedder& embedder, const ItemSource& labeled,
                             const std::vector<TrainItem>& validation, const TrainConfig& cfg,
                             const TrainOutputs& outputs) {
  return run_loop(model, embedder, {"supervised", &labeled, nullptr}, validation, cfg, outputs);
}

TrainResult train_semi(const Checkpoint& stage1, Exformer& model, Embedder& embedder,
                       const ItemSource& labeled, const ItemSource& unlabeled,
                       const std::vector<TrainItem>& validation, const TrainConfig& cfg,
                       const TrainOutputs& outputs) {
  require(stage1.meta.value("kind", "") == "exformer" && stage1.meta.contains("exformer"),
          Errc::kCheckpointMismatch, "stage-2 training needs an extractor checkpoint");
  const auto stored = exformer_config_from_json(stage1.meta.at("exformer"));
  require(to_json(stored) == to_json(model->config()), Errc::kCheckpointMismatch,
          "stage-1 checkpoint (fusion " + to_string(stored.fusion) +
              ") does not match the model configuration (fusion " +
              to_string(model->config().fusion) + ")");
  import_module(*model, "exformer", stage1);
  return run_loop(model, embedder, {"semi", &labeled, &unlabeled}, validation, cfg, outputs);
}

Exformer make_exformer(const ExformerConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Exformer(cfg);
}

}  // namespace tse
