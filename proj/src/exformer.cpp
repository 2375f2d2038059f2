#include "tse/exformer.hpp"

#include "tse/error.hpp"
#include "tse/json_util.hpp"

namespace tse {

using nlohmann::json;
namespace F = torch::nn::functional;

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kConcat: return "concat";
    case FusionMode::kMult: return "mult";
    case FusionMode::kAdd: return "add";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "concat") return FusionMode::kConcat;
  if (name == "mult") return FusionMode::kMult;
  if (name == "add") return FusionMode::kAdd;
  fail(Errc::kConfig, "unknown fusion mode '" + name + "' (expected concat, mult or add)");
}

void ExformerConfig::validate() const {
  require(feature_dim >= 1 && kernel >= 1 && stride >= 1 && chunk_len >= 2 && n_blocks >= 1 &&
              layers_per_path >= 1 && n_heads >= 1 && ff_dim >= 1 && embed_dim >= 1,
          Errc::kConfig, "exformer sizes must all be at least 1");
  require(feature_dim % n_heads == 0, Errc::kConfig,
          "feature_dim must be divisible by n_heads");
  require(chunk_len % 2 == 0, Errc::kConfig, "chunk_len must be even for 50% overlap");
  require(n_sources == 2, Errc::kConfig, "the extractor estimates exactly two sources");
}

std::int64_t ExformerConfig::n_frames(std::int64_t n_samples) const {
  if (n_samples < kernel) return 0;
  return 1 + (n_samples - kernel) / stride;
}

json to_json(const ExformerConfig& cfg) {
  return {{"feature_dim", cfg.feature_dim},
          {"kernel", cfg.kernel},
          {"stride", cfg.stride},
          {"chunk_len", cfg.chunk_len},
          {"n_blocks", cfg.n_blocks},
          {"layers_per_path", cfg.layers_per_path},
          {"n_heads", cfg.n_heads},
          {"ff_dim", cfg.ff_dim},
          {"n_sources", cfg.n_sources},
          {"embed_dim", cfg.embed_dim},
          {"fusion", to_string(cfg.fusion)},
          {"share_fusion", cfg.share_fusion},
          {"positional_encoding", cfg.positional_encoding}};
}

ExformerConfig exformer_config_from_json(const json& j) {
  ExformerConfig cfg;
  std::string fusion = to_string(cfg.fusion);
  ConfigReader(j, "exformer")
      .get("feature_dim", cfg.feature_dim)
      .get("kernel", cfg.kernel)
      .get("stride", cfg.stride)
      .get("chunk_len", cfg.chunk_len)
      .get("n_blocks", cfg.n_blocks)
      .get("layers_per_path", cfg.layers_per_path)
      .get("n_heads", cfg.n_heads)
      .get("ff_dim", cfg.ff_dim)
      .get("n_sources", cfg.n_sources)
      .get("embed_dim", cfg.embed_dim)
      .get("fusion", fusion)
      .get("share_fusion", cfg.share_fusion)
      .get("positional_encoding", cfg.positional_encoding)
      .finish();
  cfg.fusion = parse_fusion_mode(fusion);
  cfg.validate();
  return cfg;
}

std::int64_t padded_frames(std::int64_t frames, std::int64_t chunk_len) {
  const auto hop = chunk_len / 2;
  std::int64_t padded = std::max(frames, chunk_len);
  const auto rem = (padded - chunk_len) % hop;
  if (rem != 0) padded += hop - rem;
  return padded;
}

SegmentedTensor segment(const LatentRepresentation& h, int chunk_len) {
  require(chunk_len >= 2 && chunk_len % 2 == 0, Errc::kConfig,
          "chunk length must be even and at least 2");
  require(h.values.dim() == 3, Errc::kDimensionMismatch, "segment expects [batch, F, T]");
  const auto frames = h.values.size(2);
  const auto padded = padded_frames(frames, chunk_len);
  auto x = F::pad(h.values, F::PadFuncOptions({0, padded - frames}));
  // [B, F, S, K] -> [B, F, K, S]
  auto chunks = x.unfold(2, chunk_len, chunk_len / 2).permute({0, 1, 3, 2}).contiguous();
  return {chunks, frames};
}

torch::Tensor overlap_add(const SegmentedTensor& x) {
  const auto& v = x.values;
  require(v.dim() == 4, Errc::kDimensionMismatch, "overlap_add expects [batch, F, K, S]");
  const auto batch = v.size(0), feat = v.size(1), k = v.size(2), s = v.size(3);
  const auto hop = k / 2;
  const auto padded = k + (s - 1) * hop;
  auto fold = F::FoldFuncOptions({padded, 1}, {k, 1}).stride({hop, 1});
  auto summed = F::fold(v.reshape({batch, feat * k, s}), fold);  // [B, F, T_pad, 1]
  auto coverage = F::fold(torch::ones({1, k, s}, v.options()), fold);
  auto out = (summed / coverage).squeeze(-1);
  return out.narrow(2, 0, x.valid_frames);
}

torch::Tensor overlap_add_masks(const SegmentedTensor& x) {
  return torch::relu(overlap_add(x));
}

EncoderImpl::EncoderImpl(const ExformerConfig& cfg) : kernel_(cfg.kernel) {
  conv_ = register_module(
      "conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(1, cfg.feature_dim, cfg.kernel).stride(cfg.stride)));
}

LatentRepresentation EncoderImpl::forward(const torch::Tensor& waves) {
  require(waves.dim() == 2, Errc::kDimensionMismatch, "encoder expects [batch, samples]");
  const auto length = waves.size(1);
  require(length >= kernel_, Errc::kTooShort,
          "input of " + std::to_string(length) + " samples is shorter than the " +
              std::to_string(kernel_) + "-sample encoder kernel");
  return {torch::relu(conv_->forward(waves.unsqueeze(1))), length};
}

DecoderImpl::DecoderImpl(const ExformerConfig& cfg) {
  deconv_ = register_module(
      "deconv", torch::nn::ConvTranspose1d(
                    torch::nn::ConvTranspose1dOptions(cfg.feature_dim, 1, cfg.kernel).stride(cfg.stride)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent, std::int64_t origin_length) {
  auto raw = deconv_->forward(latent).squeeze(1);  // [B, (T-1)*stride + kernel]
  const auto n = raw.size(1);
  if (n >= origin_length) return raw.narrow(1, 0, origin_length);
  return F::pad(raw, F::PadFuncOptions({0, origin_length - n}));
}

FusionImpl::FusionImpl(FusionMode mode, int feature_dim, int embed_dim)
    : mode_(mode), feature_dim_(feature_dim), embed_dim_(embed_dim) {
  const int in = mode == FusionMode::kConcat ? feature_dim + embed_dim : embed_dim;
  linear_ = register_module("linear", torch::nn::Linear(in, feature_dim));
}

SegmentedTensor FusionImpl::forward(const SegmentedTensor& v, const torch::Tensor& z) {
  require(v.values.dim() == 4 && v.values.size(1) == feature_dim_, Errc::kDimensionMismatch,
          "fusion expects [batch, F, K, S] with F = " + std::to_string(feature_dim_));
  require(z.dim() == 2 && z.size(1) == embed_dim_ && z.size(0) == v.values.size(0),
          Errc::kDimensionMismatch,
          "fusion expects a [batch, " + std::to_string(embed_dim_) + "] speaker embedding");
  const auto batch = v.values.size(0), k = v.values.size(2), s = v.values.size(3);
  torch::Tensor out;
  if (mode_ == FusionMode::kConcat) {
    // Tile z over every frame of every chunk, stack along features, project.
    auto tiled = z.view({batch, embed_dim_, 1, 1}).expand({batch, embed_dim_, k, s});
    auto stacked = torch::cat({v.values, tiled}, 1).permute({0, 2, 3, 1});  // [B, K, S, F+D]
    out = linear_->forward(stacked).permute({0, 3, 1, 2});
  } else {
    auto projected = linear_->forward(z).view({batch, feature_dim_, 1, 1});
    out = mode_ == FusionMode::kMult ? projected * v.values : projected + v.values;
  }
  return {out.contiguous(), v.valid_frames};
}

DualPathBlockImpl::DualPathBlockImpl(const ExformerConfig& cfg) {
  TransformerOptions opts;
  opts.d_model = cfg.feature_dim;
  opts.n_heads = cfg.n_heads;
  opts.ff_dim = cfg.ff_dim;
  opts.n_layers = cfg.layers_per_path;
  opts.positional_encoding = cfg.positional_encoding;
  intra_ = register_module("intra", TransformerStack(opts));
  inter_ = register_module("inter", TransformerStack(opts));
}

SegmentedTensor DualPathBlockImpl::intra(const SegmentedTensor& w) {
  const auto& x = w.values;
  const auto batch = x.size(0), feat = x.size(1), k = x.size(2), s = x.size(3);
  auto seqs = x.permute({0, 3, 2, 1}).reshape({batch * s, k, feat});  // one sequence per chunk
  auto y = intra_->forward(seqs).view({batch, s, k, feat}).permute({0, 3, 2, 1});
  return {y.contiguous(), w.valid_frames};
}

SegmentedTensor DualPathBlockImpl::inter(const SegmentedTensor& u) {
  const auto& x = u.values;
  const auto batch = x.size(0), feat = x.size(1), k = x.size(2), s = x.size(3);
  auto seqs = x.permute({0, 2, 3, 1}).reshape({batch * k, s, feat});  // one sequence per frame index
  auto y = inter_->forward(seqs).view({batch, k, s, feat}).permute({0, 3, 1, 2});
  return {y.contiguous(), u.valid_frames};
}

SegmentedTensor DualPathBlockImpl::forward(const SegmentedTensor& w) {
  return inter(intra(w));
}

MaskHeadImpl::MaskHeadImpl(const ExformerConfig& cfg) : n_sources_(cfg.n_sources) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.feature_dim, cfg.n_sources * cfg.feature_dim, 1)));
}

std::vector<SegmentedTensor> MaskHeadImpl::forward(const SegmentedTensor& v) {
  auto y = conv_->forward(v.values);
  std::vector<SegmentedTensor> out;
  for (auto& part : y.chunk(n_sources_, 1)) out.push_back({part, v.valid_frames});
  return out;
}

ExformerImpl::ExformerImpl(const ExformerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = register_module("encoder", Encoder(cfg_));
  if (cfg_.share_fusion) {
    auto shared = register_module("fusion", Fusion(cfg_.fusion, cfg_.feature_dim, cfg_.embed_dim));
    fusions_.assign(static_cast<std::size_t>(cfg_.n_blocks), shared);
  }
  for (int j = 0; j < cfg_.n_blocks; ++j) {
    const auto idx = std::to_string(j);
    if (!cfg_.share_fusion) {
      fusions_.push_back(
          register_module("fusion" + idx, Fusion(cfg_.fusion, cfg_.feature_dim, cfg_.embed_dim)));
    }
    blocks_.push_back(register_module("block" + idx, DualPathBlock(cfg_)));
  }
  mask_head_ = register_module("mask_head", MaskHead(cfg_));
  decoder_ = register_module("decoder", Decoder(cfg_));
}

Fusion& ExformerImpl::fusion(int block) {
  return fusions_.at(static_cast<std::size_t>(block));
}

ExformerOutput ExformerImpl::forward(const torch::Tensor& mixture, const torch::Tensor& embedding) {
  const auto h = encoder_->forward(mixture);
  auto v = segment(h, cfg_.chunk_len);
  for (int j = 0; j < cfg_.n_blocks; ++j) {
    v = blocks_[static_cast<std::size_t>(j)]->forward(fusions_[static_cast<std::size_t>(j)]->forward(v, embedding));
  }
  std::vector<torch::Tensor> masks;
  for (const auto& m : mask_head_->forward(v)) masks.push_back(overlap_add_masks(m));
  auto mask = torch::stack(masks, 1);                     // [B, C, F, T]
  auto masked = mask * h.values.unsqueeze(1);             // [B, C, F, T]
  const auto batch = masked.size(0), frames = masked.size(3);
  auto flat = masked.reshape({batch * cfg_.n_sources, cfg_.feature_dim, frames});
  auto est = decoder_->forward(flat, h.origin_length).view({batch, cfg_.n_sources, h.origin_length});
  return {est, mask};
}

Extraction extract(Exformer& model, Embedder& embedder, const Waveform& mixture,
                   const Waveform& enrollment) {
  mixture.validate();
  torch::NoGradGuard no_grad;
  const auto z = embed(embedder, enrollment).values.unsqueeze(0);
  auto x = torch::from_blob(const_cast<float*>(mixture.samples.data()),
                            {1, static_cast<std::int64_t>(mixture.size())}, torch::kFloat32);
  auto est = model->forward(x, z).estimates.contiguous();
  require(torch::isfinite(est).all().item<bool>(), Errc::kNonFinite,
          "extractor produced non-finite samples");
  auto to_wave = [&](int c) {
    auto row = est[0][c];
    const float* p = row.data_ptr<float>();
    return Waveform(std::vector<float>(p, p + row.numel()), mixture.sample_rate);
  };
  return {to_wave(0), to_wave(1)};
}

Checkpoint exformer_checkpoint(const Exformer& model, const Embedder& embedder) {
  Checkpoint ckpt = embedder_checkpoint(embedder);
  ckpt.meta["kind"] = "exformer";
  ckpt.meta["exformer"] = to_json(model->config());
  ckpt.meta["fusion_mode"] = to_string(model->config().fusion);
  export_module(*model, "exformer", ckpt);
  return ckpt;
}

ExformerBundle load_exformer(const Checkpoint& ckpt) {
  require(ckpt.meta.value("kind", "") == "exformer" && ckpt.meta.contains("exformer"),
          Errc::kCheckpointMismatch, "checkpoint does not hold an extractor");
  ExformerBundle bundle;
  bundle.model = Exformer(exformer_config_from_json(ckpt.meta.at("exformer")));
  import_module(*bundle.model, "exformer", ckpt);
  bundle.embedder = load_embedder(ckpt);
  freeze(bundle.embedder);
  return bundle;
}

}  // namespace tse
