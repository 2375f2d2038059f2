#include "tse/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tse/error.hpp"
#include "tse/json_util.hpp"
#include "tse/mixing.hpp"

namespace tse {

using nlohmann::json;

namespace {

std::string pooling_name(EmbedderPooling p) {
  return p == EmbedderPooling::kOutputFrames ? "output_frames" : "final_states";
}

EmbedderPooling parse_pooling(const std::string& s) {
  if (s == "output_frames") return EmbedderPooling::kOutputFrames;
  if (s == "final_states") return EmbedderPooling::kFinalStates;
  fail(Errc::kConfig, "unknown embedder pooling '" + s + "'");
}

torch::Tensor to_tensor(const Waveform& w) {
  return torch::from_blob(const_cast<float*>(w.samples.data()),
                          {static_cast<std::int64_t>(w.size())}, torch::kFloat32)
      .clone();
}

}  // namespace

void EmbedderConfig::validate() const {
  require(n_blstm_layers >= 1 && hidden_units >= 1 && n_mels >= 1 && embed_dim >= 1,
          Errc::kConfig, "embedder sizes must all be at least 1");
}

json to_json(const EmbedderConfig& cfg) {
  return {{"n_blstm_layers", cfg.n_blstm_layers},
          {"hidden_units", cfg.hidden_units},
          {"n_mels", cfg.n_mels},
          {"embed_dim", cfg.embed_dim},
          {"pooling", pooling_name(cfg.pooling)}};
}

EmbedderConfig embedder_config_from_json(const json& j) {
  EmbedderConfig cfg;
  std::string pooling = pooling_name(cfg.pooling);
  ConfigReader(j, "embedder")
      .get("n_blstm_layers", cfg.n_blstm_layers)
      .get("hidden_units", cfg.hidden_units)
      .get("n_mels", cfg.n_mels)
      .get("embed_dim", cfg.embed_dim)
      .get("pooling", pooling)
      .finish();
  cfg.pooling = parse_pooling(pooling);
  cfg.validate();
  return cfg;
}

json to_json(const PretrainConfig& cfg) {
  return {{"speakers_per_batch", cfg.speakers_per_batch},
          {"utts_per_batch", cfg.utts_per_batch},
          {"segment_seconds", cfg.segment_seconds},
          {"lr", cfg.lr},
          {"steps", cfg.steps},
          {"grad_clip", cfg.grad_clip},
          {"seed", cfg.seed}};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  PretrainConfig cfg;
  ConfigReader(j, "pretrain")
      .get("speakers_per_batch", cfg.speakers_per_batch)
      .get("utts_per_batch", cfg.utts_per_batch)
      .get("segment_seconds", cfg.segment_seconds)
      .get("lr", cfg.lr)
      .get("steps", cfg.steps)
      .get("grad_clip", cfg.grad_clip)
      .get("seed", cfg.seed)
      .finish();
  return cfg;
}

EmbedderImpl::EmbedderImpl(const EmbedderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  mel_.n_mels = cfg_.n_mels;
  lstm_ = register_module(
      "lstm", torch::nn::LSTM(torch::nn::LSTMOptions(cfg_.n_mels, cfg_.hidden_units)
                                  .num_layers(cfg_.n_blstm_layers)
                                  .bidirectional(true)
                                  .batch_first(true)));
  proj_ = register_module("proj", torch::nn::Linear(2 * cfg_.hidden_units, cfg_.embed_dim));
}

torch::Tensor EmbedderImpl::frame_outputs(const torch::Tensor& waves) {
  return std::get<0>(lstm_->forward(log_mel(waves, mel_)));
}

torch::Tensor EmbedderImpl::forward(const torch::Tensor& waves) {
  require(waves.dim() == 2, Errc::kDimensionMismatch, "embedder expects [batch, samples]");
  auto [out, state] = lstm_->forward(log_mel(waves, mel_));
  const auto last = out.size(1) - 1;
  torch::Tensor pooled;
  if (cfg_.pooling == EmbedderPooling::kOutputFrames) {
    pooled = 0.5 * (out.select(1, 0) + out.select(1, last));
  } else {
    const auto& h_n = std::get<0>(state);  // [layers * 2, B, H]
    pooled = torch::cat({h_n[h_n.size(0) - 2], h_n[h_n.size(0) - 1]}, -1);
  }
  auto z = proj_->forward(pooled);
  z = z / torch::clamp_min(z.norm(2, -1, /*keepdim=*/true), 1e-12);
  require(torch::isfinite(z).all().item<bool>(), Errc::kNonFinite,
          "embedder produced non-finite activations");
  return z;
}

SpeakerEmbedding embed(Embedder& embedder, const Waveform& w) {
  w.validate();
  torch::NoGradGuard no_grad;
  auto z = embedder->forward(to_tensor(w).unsqueeze(0));
  return SpeakerEmbedding{z.squeeze(0).contiguous()};
}

void freeze(Embedder& embedder) {
  for (auto& p : embedder->parameters()) p.set_requires_grad(false);
  embedder->eval();
}

torch::Tensor ge2e_loss(const torch::Tensor& e, const torch::Tensor& w, const torch::Tensor& b) {
  require(e.dim() == 3, Errc::kDimensionMismatch, "ge2e_loss expects [N, M, D]");
  const auto n_spk = e.size(0);
  const auto n_utt = e.size(1);
  require(n_spk >= 2, Errc::kInsufficientData,
          "ge2e_loss needs at least two speakers to form a contrast");
  require(n_utt >= 2, Errc::kInsufficientData,
          "ge2e_loss needs at least two utterances per speaker");
  {
    torch::NoGradGuard no_grad;
    const double dev = (e.norm(2, -1) - 1.0).abs().max().item<double>();
    require(dev <= 1e-4, Errc::kInvalidArgument, "ge2e_loss expects unit-norm embeddings");
  }

  auto unit = [](const torch::Tensor& x) {
    return x / torch::clamp_min(x.norm(2, -1, /*keepdim=*/true), 1e-8);
  };
  auto centroids = e.mean(1);                                        // [N, D]
  auto exclusive = (e.sum(1, true) - e) / static_cast<double>(n_utt - 1);  // [N, M, D]
  auto cos_all = torch::einsum("jid,kd->jik", {e, unit(centroids)});   // [N, M, N]
  auto cos_self = (e * unit(exclusive)).sum(-1);                    // [N, M]

  auto own = torch::eye(n_spk, e.options().dtype(torch::kBool)).unsqueeze(1);  // [N, 1, N]
  auto cos = torch::where(own, cos_self.unsqueeze(-1), cos_all);
  auto sim = torch::clamp_min(w, 1e-6) * cos + b;

  auto labels = torch::arange(n_spk, torch::kLong).repeat_interleave(n_utt);
  return torch::nn::functional::cross_entropy(sim.reshape({n_spk * n_utt, n_spk}), labels);
}

Ge2eImpl::Ge2eImpl(double w_init, double b_init) {
  w = register_parameter("w", torch::full({}, w_init));
  b = register_parameter("b", torch::full({}, b_init));
}

torch::Tensor Ge2eImpl::forward(const torch::Tensor& embeddings) {
  return ge2e_loss(embeddings, w, b);
}

PretrainResult pretrain_embedder(const Corpus& corpus, const EmbedderConfig& cfg,
                                 const PretrainConfig& opt) {
  const int n_spk = opt.speakers_per_batch;
  const int n_utt = opt.utts_per_batch;
  require(n_spk >= 2 && n_utt >= 2, Errc::kConfig,
          "pretraining needs at least 2 speakers x 2 utterances per batch");
  std::vector<int> eligible;
  for (const auto& [id, utts] : corpus.by_speaker) {
    if (static_cast<int>(utts.size()) >= n_utt) eligible.push_back(id);
  }
  require(static_cast<int>(eligible.size()) >= n_spk, Errc::kInsufficientData,
          "pretraining needs " + std::to_string(n_spk) + " speakers with at least " +
              std::to_string(n_utt) + " utterances; corpus has " +
              std::to_string(eligible.size()) + " such speakers");

  const int rate = corpus.by_speaker.at(eligible.front()).front().sample_rate;
  const auto seg = static_cast<std::size_t>(std::llround(opt.segment_seconds * rate));

  torch::manual_seed(opt.seed);
  PretrainResult res;
  res.embedder = Embedder(cfg);
  res.ge2e = Ge2e();
  std::vector<torch::Tensor> params = res.embedder->parameters();
  for (auto& p : res.ge2e->parameters()) params.push_back(p);
  torch::optim::Adam adam(params, torch::optim::AdamOptions(opt.lr));

  for (int step = 0; step < opt.steps; ++step) {
    std::seed_seq seq{static_cast<unsigned>(opt.seed), static_cast<unsigned>(opt.seed >> 32),
                      static_cast<unsigned>(step)};
    std::mt19937_64 rng(seq);
    std::vector<int> spk = eligible;
    std::shuffle(spk.begin(), spk.end(), rng);

    std::vector<torch::Tensor> rows;
    for (int j = 0; j < n_spk; ++j) {
      const auto& utts = corpus.by_speaker.at(spk[j]);
      std::vector<std::size_t> idx(utts.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int i = 0; i < n_utt; ++i) rows.push_back(to_tensor(crop_or_pad(utts[idx[i]], seg, rng)));
    }
    auto batch = torch::stack(rows);
    auto z = res.embedder->forward(batch).reshape({n_spk, n_utt, -1});
    auto loss = res.ge2e->forward(z);
    const double value = loss.item<double>();
    require(std::isfinite(value), Errc::kNonFinite,
            "embedder pretraining diverged at step " + std::to_string(step));
    res.losses.push_back(value);

    adam.zero_grad();
    loss.backward();
    if (opt.grad_clip > 0) torch::nn::utils::clip_grad_norm_(params, opt.grad_clip);
    adam.step();
  }
  return res;
}

CosineStats speaker_cosine_stats(Embedder& embedder, const Corpus& corpus) {
  std::vector<int> owner;
  std::vector<torch::Tensor> zs;
  for (const auto& [id, utts] : corpus.by_speaker) {
    for (const auto& u : utts) {
      owner.push_back(id);
      zs.push_back(embed(embedder, u).values);
    }
  }
  auto z = torch::stack(zs).to(torch::kFloat64);
  auto cos = torch::matmul(z, z.transpose(0, 1));
  auto acc = cos.accessor<double, 2>();
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < owner.size(); ++a) {
    for (std::size_t b = a + 1; b < owner.size(); ++b) {
      if (owner[a] == owner[b]) {
        intra += acc[a][b];
        ++n_intra;
      } else {
        inter += acc[a][b];
        ++n_inter;
      }
    }
  }
  require(n_intra > 0 && n_inter > 0, Errc::kInsufficientData,
          "cosine statistics need at least two speakers with two utterances");
  return {intra / static_cast<double>(n_intra), inter / static_cast<double>(n_inter)};
}

Checkpoint embedder_checkpoint(const Embedder& embedder, const Ge2e* ge2e) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "embedder";
  ckpt.meta["embedder"] = to_json(embedder->config());
  export_module(*embedder, "embedder", ckpt);
  if (ge2e != nullptr) export_module(**ge2e, "ge2e", ckpt);
  return ckpt;
}

void save_embedder(const std::filesystem::path& path, const Embedder& embedder,
                   const Ge2e* ge2e) {
  embedder_checkpoint(embedder, ge2e).save(path);
}

Embedder load_embedder(const Checkpoint& ckpt) {
  require(ckpt.meta.contains("embedder"), Errc::kCheckpointMismatch,
          "checkpoint carries no embedder configuration");
  Embedder embedder(embedder_config_from_json(ckpt.meta.at("embedder")));
  import_module(*embedder, "embedder", ckpt);
  return embedder;
}

Embedder load_embedder(const std::filesystem::path& path) {
  return load_embedder(Checkpoint::load(path));
}

}  // namespace tse
