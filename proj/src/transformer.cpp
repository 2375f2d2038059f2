#include "tse/transformer.hpp"

#include <cmath>

#include "tse/error.hpp"

namespace tse {

torch::Tensor sinusoidal_encoding(std::int64_t length, std::int64_t d_model,
                                  torch::ScalarType dtype) {
  auto pos = torch::arange(length, torch::kFloat64).unsqueeze(1);
  auto pair = torch::arange(0, d_model, 2, torch::kFloat64);
  auto freq = torch::exp(pair * (-std::log(10000.0) / static_cast<double>(d_model)));
  auto pe = torch::zeros({length, d_model}, torch::kFloat64);
  auto angle = pos * freq;
  pe.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, torch::indexing::None, 2)},
                torch::sin(angle));
  const auto n_odd = d_model / 2;
  pe.index_put_({torch::indexing::Slice(), torch::indexing::Slice(1, torch::indexing::None, 2)},
                torch::cos(angle.narrow(1, 0, n_odd)));
  return pe.to(dtype);
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int d_model, int n_heads) : n_heads_(n_heads) {
  require(n_heads >= 1 && d_model % n_heads == 0, Errc::kConfig,
          "feature dimension must be divisible by the number of heads");
  qkv_ = register_module("qkv", torch::nn::Linear(d_model, 3 * d_model));
  out_ = register_module("out", torch::nn::Linear(d_model, d_model));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0), t = x.size(1), d = x.size(2);
  const auto dh = d / n_heads_;
  auto qkv = qkv_->forward(x).view({n, t, 3, n_heads_, dh}).permute({2, 0, 3, 1, 4});
  auto ctx = at::scaled_dot_product_attention(qkv[0], qkv[1], qkv[2]);  // [N, h, T, dh]
  return out_->forward(ctx.transpose(1, 2).reshape({n, t, d}));
}

TransformerLayerImpl::TransformerLayerImpl(const TransformerOptions& opts)
    : positional_encoding_(opts.positional_encoding) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opts.d_model})));
  attn_ = register_module("attn", MultiHeadAttention(opts.d_model, opts.n_heads));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({opts.d_model})));
  ff1_ = register_module("ff1", torch::nn::Linear(opts.d_model, opts.ff_dim));
  ff2_ = register_module("ff2", torch::nn::Linear(opts.ff_dim, opts.d_model));
}

torch::Tensor TransformerLayerImpl::forward(torch::Tensor x) {
  if (positional_encoding_) {
    x = x + sinusoidal_encoding(x.size(1), x.size(2), x.scalar_type());
  }
  x = x + attn_->forward(norm1_->forward(x));
  return x + ff2_->forward(torch::gelu(ff1_->forward(norm2_->forward(x))));
}

TransformerStackImpl::TransformerStackImpl(const TransformerOptions& opts) {
  require(opts.n_layers >= 1, Errc::kConfig, "transformer stack needs at least one layer");
  for (int i = 0; i < opts.n_layers; ++i) layers_->push_back(TransformerLayer(opts));
  register_module("layers", layers_);
}

torch::Tensor TransformerStackImpl::forward(torch::Tensor x) {
  for (const auto& layer : *layers_) x = layer->as<TransformerLayerImpl>()->forward(x);
  return x;
}

}  // namespace tse
