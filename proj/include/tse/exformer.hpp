#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "tse/checkpoint.hpp"
#include "tse/embedder.hpp"
#include "tse/transformer.hpp"
#include "tse/waveform.hpp"

namespace tse {

// How the speaker embedding enters each dual-path block.
enum class FusionMode {
  kConcat,  // Linear([V; Z])
  kMult,    // Linear(Z) * V
  kAdd,     // Linear(Z) + V
};

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);

struct ExformerConfig {
  int feature_dim = 256;     // F
  int kernel = 16;
  int stride = 8;
  int chunk_len = 250;       // K
  int n_blocks = 2;          // B
  int layers_per_path = 8;
  int n_heads = 8;
  int ff_dim = 1024;
  int n_sources = 2;         // C
  int embed_dim = 256;       // D
  FusionMode fusion = FusionMode::kAdd;
  bool share_fusion = false;        // one fusion map reused by every block
  bool positional_encoding = true;

  void validate() const;
  std::int64_t n_frames(std::int64_t n_samples) const;
};

nlohmann::json to_json(const ExformerConfig& cfg);
ExformerConfig exformer_config_from_json(const nlohmann::json& j);

// Encoder output H, [batch, F, T], plus the sample count it came from.
struct LatentRepresentation {
  torch::Tensor values;
  std::int64_t origin_length = 0;
};

// Chunked representation, [batch, F, K, S]. valid_frames is T before padding.
struct SegmentedTensor {
  torch::Tensor values;
  std::int64_t valid_frames = 0;

  std::int64_t chunk_len() const { return values.size(2); }
  std::int64_t n_chunks() const { return values.size(3); }
};

// Frame count after right-padding T so that chunks of length K at hop K/2
// tile it exactly.
std::int64_t padded_frames(std::int64_t frames, std::int64_t chunk_len);

SegmentedTensor segment(const LatentRepresentation& h, int chunk_len);

// Inverse of segment: overlapping halves are summed and divided by how many
// chunks cover each frame, and padding frames are dropped. [batch, F, T].
torch::Tensor overlap_add(const SegmentedTensor& x);

// overlap_add followed by ReLU; one non-negative [batch, F, T] mask.
torch::Tensor overlap_add_masks(const SegmentedTensor& x);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ExformerConfig& cfg);
  LatentRepresentation forward(const torch::Tensor& waves);  // [B, L]

 private:
  int kernel_;
  torch::nn::Conv1d conv_{nullptr};
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ExformerConfig& cfg);
  // [B, F, T] -> [B, origin_length]; the transposed-convolution output of
  // (T - 1) * stride + kernel samples is trimmed or zero-padded to length.
  torch::Tensor forward(const torch::Tensor& latent, std::int64_t origin_length);

 private:
  torch::nn::ConvTranspose1d deconv_{nullptr};
};
TORCH_MODULE(Decoder);

class FusionImpl : public torch::nn::Module {
 public:
  FusionImpl(FusionMode mode, int feature_dim, int embed_dim);
  // V: [B, F, K, S], z: [B, D] -> [B, F, K, S]
  SegmentedTensor forward(const SegmentedTensor& v, const torch::Tensor& z);

  FusionMode mode() const { return mode_; }
  torch::nn::Linear& linear() { return linear_; }

 private:
  FusionMode mode_;
  int feature_dim_, embed_dim_;
  torch::nn::Linear linear_{nullptr};
};
TORCH_MODULE(Fusion);

// Intra-chunk transformer stack over each chunk (sequence length K), then an
// inter-chunk stack across chunks (sequence length S). Shape-preserving.
class DualPathBlockImpl : public torch::nn::Module {
 public:
  explicit DualPathBlockImpl(const ExformerConfig& cfg);
  SegmentedTensor forward(const SegmentedTensor& w);
  SegmentedTensor intra(const SegmentedTensor& w);
  SegmentedTensor inter(const SegmentedTensor& u);

 private:
  TransformerStack intra_{nullptr}, inter_{nullptr};
};
TORCH_MODULE(DualPathBlock);

// 1x1 2-D convolution from F to C*F channels, split per source.
class MaskHeadImpl : public torch::nn::Module {
 public:
  explicit MaskHeadImpl(const ExformerConfig& cfg);
  std::vector<SegmentedTensor> forward(const SegmentedTensor& v);

  torch::nn::Conv2d& conv() { return conv_; }

 private:
  int n_sources_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(MaskHead);

struct ExformerOutput {
  torch::Tensor estimates;  // [B, C, L]; index 0 is the target
  torch::Tensor masks;      // [B, C, F, T]
};

class ExformerImpl : public torch::nn::Module {
 public:
  explicit ExformerImpl(const ExformerConfig& cfg);

  // mixture [B, L], speaker embedding [B, D].
  ExformerOutput forward(const torch::Tensor& mixture, const torch::Tensor& embedding);

  const ExformerConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }
  Fusion& fusion(int block);
  DualPathBlock& block(int index) { return blocks_[static_cast<std::size_t>(index)]; }
  MaskHead& mask_head() { return mask_head_; }

 private:
  ExformerConfig cfg_;
  Encoder encoder_{nullptr};
  std::vector<Fusion> fusions_;
  std::vector<DualPathBlock> blocks_;
  MaskHead mask_head_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(Exformer);

struct Extraction {
  Waveform target;
  Waveform residual;
};

// Full pipeline for one mixture: embed the enrollment with the frozen
// embedder, then separate. Pure given the weights.
Extraction extract(Exformer& model, Embedder& embedder, const Waveform& mixture,
                   const Waveform& enrollment);

// A trained system: separator plus the frozen embedder it was trained with.
struct ExformerBundle {
  Exformer model{nullptr};
  Embedder embedder{nullptr};
};

Checkpoint exformer_checkpoint(const Exformer& model, const Embedder& embedder);
ExformerBundle load_exformer(const Checkpoint& ckpt);

}  // namespace tse
