#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace tse {

struct TransformerOptions {
  int d_model = 256;
  int n_heads = 8;
  int ff_dim = 1024;
  int n_layers = 8;
  bool positional_encoding = true;
};

// [length, d_model] table, sin on even and cos on odd feature indices.
torch::Tensor sinusoidal_encoding(std::int64_t length, std::int64_t d_model,
                                  torch::ScalarType dtype = torch::kFloat32);

class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(int d_model, int n_heads);
  torch::Tensor forward(const torch::Tensor& x);  // [N, T, d] -> [N, T, d]

 private:
  int n_heads_;
  torch::nn::Linear qkv_{nullptr}, out_{nullptr};
};
TORCH_MODULE(MultiHeadAttention);

// Pre-norm encoder layer:
//   x += PE;  x += MHA(LN(x));  x += FF(LN(x))
class TransformerLayerImpl : public torch::nn::Module {
 public:
  explicit TransformerLayerImpl(const TransformerOptions& opts);
  torch::Tensor forward(torch::Tensor x);

 private:
  bool positional_encoding_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  MultiHeadAttention attn_{nullptr};
  torch::nn::Linear ff1_{nullptr}, ff2_{nullptr};
};
TORCH_MODULE(TransformerLayer);

// n_layers encoder layers applied to a batch of sequences, [N, T, d].
class TransformerStackImpl : public torch::nn::Module {
 public:
  explicit TransformerStackImpl(const TransformerOptions& opts);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::ModuleList layers_;
};
TORCH_MODULE(TransformerStack);

}  // namespace tse
