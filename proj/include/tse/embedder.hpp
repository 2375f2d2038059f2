#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "tse/checkpoint.hpp"
#include "tse/manifest.hpp"
#include "tse/mel.hpp"
#include "tse/waveform.hpp"

namespace tse {

// How the recurrent outputs collapse to one vector per utterance.
enum class EmbedderPooling {
  kOutputFrames,  // mean of the output sequence at the first and last frame
  kFinalStates,   // forward state after the last frame, backward state after the first
};

struct EmbedderConfig {
  int n_blstm_layers = 3;
  int hidden_units = 768;  // per direction
  int n_mels = 40;
  int embed_dim = 256;
  EmbedderPooling pooling = EmbedderPooling::kOutputFrames;

  void validate() const;
};

nlohmann::json to_json(const EmbedderConfig& cfg);
EmbedderConfig embedder_config_from_json(const nlohmann::json& j);

// Unit-L2-norm speaker vector.
struct SpeakerEmbedding {
  torch::Tensor values;  // [embed_dim], float32

  std::int64_t dim() const { return values.size(0); }
};

class EmbedderImpl : public torch::nn::Module {
 public:
  explicit EmbedderImpl(const EmbedderConfig& cfg);

  // [B, L] waveforms -> [B, embed_dim] unit-norm embeddings. Differentiable
  // with respect to the input, so it can score separated estimates.
  torch::Tensor forward(const torch::Tensor& waves);

  // Recurrent output sequence, [B, n_frames, 2 * hidden_units].
  torch::Tensor frame_outputs(const torch::Tensor& waves);

  const EmbedderConfig& config() const { return cfg_; }
  const MelConfig& mel_config() const { return mel_; }

 private:
  EmbedderConfig cfg_;
  MelConfig mel_;
  torch::nn::LSTM lstm_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(Embedder);

SpeakerEmbedding embed(Embedder& embedder, const Waveform& w);

// Marks every parameter as not requiring gradients and switches to eval mode.
// Gradients still flow through the network to its input.
void freeze(Embedder& embedder);

// Generalised end-to-end softmax loss over an [N speakers, M utterances, D]
// batch of unit-norm embeddings. The query utterance is excluded from its own
// speaker's centroid. `w` is clamped to at least 1e-6.
torch::Tensor ge2e_loss(const torch::Tensor& embeddings, const torch::Tensor& w,
                        const torch::Tensor& b);

// Learnable similarity scale and offset of the GE2E loss.
class Ge2eImpl : public torch::nn::Module {
 public:
  Ge2eImpl(double w_init = 10.0, double b_init = -5.0);
  torch::Tensor forward(const torch::Tensor& embeddings);

  torch::Tensor w, b;
};
TORCH_MODULE(Ge2e);

struct PretrainConfig {
  int speakers_per_batch = 4;  // N
  int utts_per_batch = 4;      // M
  double segment_seconds = 4.0;
  double lr = 5e-4;
  int steps = 300;
  double grad_clip = 3.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const PretrainConfig& cfg);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct PretrainResult {
  Embedder embedder{nullptr};
  Ge2e ge2e{nullptr};
  std::vector<double> losses;  // one per step
};

// Minimises the GE2E loss over seeded N x M batches drawn from `corpus`.
PretrainResult pretrain_embedder(const Corpus& corpus, const EmbedderConfig& cfg,
                                 const PretrainConfig& opt);

struct CosineStats {
  double intra_mean = 0.0;  // same-speaker pairs
  double inter_mean = 0.0;  // cross-speaker pairs
};

CosineStats speaker_cosine_stats(Embedder& embedder, const Corpus& corpus);

Checkpoint embedder_checkpoint(const Embedder& embedder, const Ge2e* ge2e = nullptr);
void save_embedder(const std::filesystem::path& path, const Embedder& embedder,
                   const Ge2e* ge2e = nullptr);
Embedder load_embedder(const Checkpoint& ckpt);
Embedder load_embedder(const std::filesystem::path& path);

}  // namespace tse
