#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "test_util.hpp"
#include "tse/error.hpp"
#include "tse/exformer.hpp"
#include "tse/losses.hpp"
#include "tse/metrics.hpp"
#include "tse/training.hpp"

namespace tse {
namespace {

using torch::indexing::Slice;

ExformerConfig tiny_config() {
  ExformerConfig c;
  c.feature_dim = 16;
  c.chunk_len = 4;
  c.n_blocks = 2;
  c.layers_per_path = 1;
  c.n_heads = 2;
  c.ff_dim = 32;
  c.embed_dim = 8;
  return c;
}

EmbedderConfig tiny_embedder() {
  EmbedderConfig e;
  e.n_blstm_layers = 1;
  e.hidden_units = 8;
  e.embed_dim = 8;
  return e;
}

void zero_matching(torch::nn::Module& m, const std::vector<std::string>& keys) {
  torch::NoGradGuard g;
  for (auto& p : m.named_parameters()) {
    for (const auto& k : keys) {
      if (p.key().find(k) != std::string::npos) p.value().zero_();
    }
  }
}

TEST(Encoder, FrameCounts) {
  ExformerConfig c;
  EXPECT_EQ(c.n_frames(24000), 2999);
  EXPECT_EQ(c.n_frames(16), 1);
  Encoder enc(tiny_config());
  const auto h = enc->forward(torch::randn({2, 1000}));
  EXPECT_EQ(h.values.sizes(), (std::vector<std::int64_t>{2, 16, 124}));
  EXPECT_GE(h.values.min().item<float>(), 0.0f);  // ReLU
  EXPECT_THROW(enc->forward(torch::randn({1, 15})), Error);
}

TEST(Decoder, RawLengthAndTrim) {
  ExformerConfig c = tiny_config();
  Decoder dec(c);
  // (T - 1) * 8 + 16 samples before trimming.
  EXPECT_EQ(dec->forward(torch::randn({1, 16, 2999}), 24000).size(1), 24000);
  EXPECT_EQ(dec->forward(torch::randn({1, 16, 1}), 16).size(1), 16);
  EXPECT_EQ(dec->forward(torch::randn({1, 16, 124}), 1000).size(1), 1000);
  const auto padded = dec->forward(torch::randn({1, 16, 1}), 20);
  EXPECT_EQ(padded.size(1), 20);
  EXPECT_TRUE(torch::equal(padded.index({0, Slice(16, 20)}), torch::zeros({4})));
}

TEST(Segment, HandEnumeratedWindows) {
  // T = 6, K = 4: hop 2, S = 2, chunks [0..3] and [2..5].
  auto h = torch::arange(6, torch::kFloat32).view({1, 1, 6});
  auto s = segment({h, 0}, 4);
  ASSERT_EQ(s.values.sizes(), (std::vector<std::int64_t>{1, 1, 4, 2}));
  EXPECT_TRUE(torch::equal(s.values.index({0, 0, Slice(), 0}), torch::tensor({0.f, 1.f, 2.f, 3.f})));
  EXPECT_TRUE(torch::equal(s.values.index({0, 0, Slice(), 1}), torch::tensor({2.f, 3.f, 4.f, 5.f})));
  EXPECT_EQ(s.valid_frames, 6);

  // T = 4 fits one chunk exactly.
  EXPECT_EQ(segment({torch::ones({1, 1, 4}), 0}, 4).n_chunks(), 1);

  // T = 5 pads to 6; the last chunk ends in one zero frame.
  auto p = segment({torch::ones({1, 1, 5}), 0}, 4);
  ASSERT_EQ(p.n_chunks(), 2);
  EXPECT_TRUE(torch::equal(p.values.index({0, 0, Slice(), 1}), torch::tensor({1.f, 1.f, 1.f, 0.f})));
  EXPECT_EQ(padded_frames(5, 4), 6);
  EXPECT_EQ(padded_frames(1, 4), 4);
}

TEST(Segment, OverlapAddDividesByCoverage) {
  // Chunks filled with constants 1 and 3: frames 2,3 are seen by both.
  SegmentedTensor s{torch::stack({torch::full({4}, 1.f), torch::full({4}, 3.f)}, 1).view({1, 1, 4, 2}), 6};
  const auto y = overlap_add(s);
  EXPECT_TRUE(torch::allclose(y.view({6}), torch::tensor({1.f, 1.f, 2.f, 2.f, 3.f, 3.f})));
}

TEST(Segment, RoundTripProperty) {
  torch::manual_seed(0);
  for (int k : {4, 16}) {
    for (std::int64_t t : {std::int64_t(k), std::int64_t(k + 1), std::int64_t(3 * k),
                           std::int64_t(3 * k + k / 2 - 1), std::int64_t(1)}) {
      auto h = torch::randn({2, 5, t}, torch::kFloat64);
      const auto back = overlap_add(segment({h, 0}, k));
      ASSERT_EQ(back.sizes(), h.sizes());
      EXPECT_LE((back - h).abs().max().item<double>(), 1e-12) << "K=" << k << " T=" << t;
    }
  }
}

TEST(Segment, MasksAreRectified) {
  SegmentedTensor s{-torch::rand({1, 3, 4, 3}), 8};
  EXPECT_TRUE(torch::equal(overlap_add_masks(s), torch::zeros({1, 3, 8})));
}

TEST(Fusion, MatchesPerPositionOracle) {
  // F = 4, D = 3, K = 2, S = 2.
  torch::manual_seed(1);
  const auto v = torch::randn({1, 4, 2, 2}, torch::kFloat64);
  const auto z = torch::randn({1, 3}, torch::kFloat64);
  for (auto mode : {FusionMode::kConcat, FusionMode::kMult, FusionMode::kAdd}) {
    Fusion f(mode, 4, 3);
    f->to(torch::kFloat64);
    const auto out = f->forward({v, 2}, z).values;
    ASSERT_EQ(out.sizes(), v.sizes());
    const auto W = f->linear()->weight, b = f->linear()->bias;
    for (int k = 0; k < 2; ++k) {
      for (int s = 0; s < 2; ++s) {
        const auto col = v.index({0, Slice(), k, s});
        torch::Tensor expect;
        if (mode == FusionMode::kConcat) {
          expect = torch::mv(W, torch::cat({col, z[0]})) + b;
        } else {
          const auto proj = torch::mv(W, z[0]) + b;
          expect = mode == FusionMode::kMult ? proj * col : proj + col;
        }
        EXPECT_LE((out.index({0, Slice(), k, s}) - expect).abs().max().item<double>(), 1e-12);
      }
    }
  }
}

TEST(Fusion, ExactIdentities) {
  torch::manual_seed(2);
  const auto v = torch::randn({2, 4, 2, 3});
  const auto z = torch::randn({2, 3});
  Fusion add(FusionMode::kAdd, 4, 3);
  Fusion mult(FusionMode::kMult, 4, 3);
  {
    torch::NoGradGuard g;
    add->linear()->weight.zero_();
    add->linear()->bias.zero_();
    mult->linear()->weight.zero_();
    mult->linear()->bias.fill_(1.0);
  }
  EXPECT_TRUE(torch::equal(add->forward({v, 6}, z).values, v));
  EXPECT_TRUE(torch::equal(mult->forward({v, 6}, z).values, v));
}

TEST(Fusion, RejectsWrongEmbeddingSize) {
  Fusion f(FusionMode::kAdd, 4, 3);
  EXPECT_THROW(f->forward({torch::zeros({1, 4, 2, 2}), 2}, torch::zeros({1, 5})), Error);
}

TEST(DualPath, ShapePreserved) {
  DualPathBlock b(tiny_config());
  const auto w = torch::randn({2, 16, 4, 5});
  EXPECT_EQ(b->forward({w, 12}).values.sizes(), w.sizes());
}

TEST(DualPath, ResidualIdentityWithoutPositionalEncoding) {
  auto c = tiny_config();
  c.positional_encoding = false;
  DualPathBlock b(c);
  zero_matching(*b, {"attn.out", "ff2"});
  const auto w = torch::randn({1, 16, 4, 3});
  EXPECT_TRUE(torch::equal(b->forward({w, 8}).values, w));
}

TEST(DualPath, PositionalEncodingIsTheOnlyResidualContribution) {
  auto c = tiny_config();
  DualPathBlock b(c);
  zero_matching(*b, {"attn.out", "ff2"});
  const auto w = torch::randn({1, 16, 4, 3});
  const auto y = b->forward({w, 8}).values;
  // intra adds PE over K positions, inter over S positions.
  const auto pe_k = sinusoidal_encoding(4, 16).t().view({1, 16, 4, 1});
  const auto pe_s = sinusoidal_encoding(3, 16).t().view({1, 16, 1, 3});
  EXPECT_TRUE(torch::allclose(y, w + pe_k + pe_s, 1e-5, 1e-6));
}

TEST(DualPath, IntraIsChunkIndependent) {
  torch::manual_seed(3);
  DualPathBlock b(tiny_config());
  const auto w = torch::randn({1, 16, 4, 5});
  const auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  const auto base = b->intra({w, 12}).values;
  const auto permuted = b->intra({w.index_select(3, perm), 12}).values;
  EXPECT_TRUE(torch::allclose(permuted, base.index_select(3, perm), 1e-5, 1e-6));
}

TEST(MaskHead, ConstructedIdentity) {
  auto c = tiny_config();
  MaskHead head(c);
  {
    torch::NoGradGuard g;
    auto& conv = head->conv();
    conv->weight.zero_();
    conv->bias.zero_();
    for (int i = 0; i < c.feature_dim; ++i) conv->weight.index_put_({i, i, 0, 0}, 1.0);
  }
  const auto v = torch::randn({1, 16, 4, 3});
  const auto out = head->forward({v, 8});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(torch::equal(out[0].values, v));
  EXPECT_TRUE(torch::equal(out[1].values, torch::zeros_like(v)));
}

TEST(MaskHead, GradientReachesInput) {
  MaskHead head(tiny_config());
  auto v = torch::randn({1, 16, 4, 3}, torch::requires_grad());
  auto out = head->forward({v, 8});
  (out[0].values.sum() + out[1].values.pow(2).sum()).backward();
  EXPECT_GT(v.grad().abs().sum().item<double>(), 0.0);
}

TEST(Exformer, ShapeChain) {
  torch::manual_seed(4);
  auto c = tiny_config();
  Exformer model(c);
  for (std::int64_t len : {16, 1000, 24000}) {
    const auto out = model->forward(torch::randn({1, len}), torch::randn({1, 8}));
    EXPECT_EQ(out.estimates.sizes(), (std::vector<std::int64_t>{1, 2, len}));
    EXPECT_EQ(out.masks.sizes(), (std::vector<std::int64_t>{1, 2, 16, c.n_frames(len)}));
    EXPECT_TRUE(torch::isfinite(out.estimates).all().item<bool>());
  }
}

TEST(Exformer, EveryFusionModeTrainsItsWeights) {
  for (auto mode : {FusionMode::kConcat, FusionMode::kMult, FusionMode::kAdd}) {
    torch::manual_seed(5);
    auto c = tiny_config();
    c.fusion = mode;
    Exformer model(c);
    const auto x = torch::randn({1, 400});
    const auto ref = torch::randn({1, 400});
    auto z = torch::nn::functional::normalize(torch::randn({1, 8}));
    const auto est = model->forward(x, z).estimates;
    (-si_sdr(ref, est.select(1, 0))).sum().backward();
    for (int j = 0; j < c.n_blocks; ++j) {
      EXPECT_GT(model->fusion(j)->linear()->weight.grad().abs().sum().item<double>(), 0.0)
          << to_string(mode) << " block " << j;
    }
  }
}

TEST(Exformer, SharedFusionOption) {
  auto c = tiny_config();
  c.share_fusion = true;
  Exformer model(c);
  EXPECT_EQ(model->fusion(0).ptr(), model->fusion(1).ptr());
  std::size_t n = 0;
  for (auto& p : model->named_parameters()) n += p.key().rfind("fusion", 0) == 0;
  EXPECT_EQ(n, 2u);  // one weight and one bias
}

TEST(Exformer, ConfigValidation) {
  auto c = tiny_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config();
  c.chunk_len = 5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_fusion_mode("concat"), FusionMode::kConcat);
  EXPECT_THROW(parse_fusion_mode("film"), Error);
}

TEST(Extract, DeterministicAndFinite) {
  torch::manual_seed(6);
  Exformer model(tiny_config());
  Embedder emb(tiny_embedder());
  freeze(emb);
  std::mt19937_64 rng(7);
  const auto mix = testing::random_wave(1000, rng);
  const auto enroll = testing::random_wave(4000, rng);
  const auto a = extract(model, emb, mix, enroll);
  const auto b = extract(model, emb, mix, enroll);
  ASSERT_EQ(a.target.size(), 1000u);
  ASSERT_EQ(a.residual.size(), 1000u);
  EXPECT_EQ(a.target.samples, b.target.samples);
  EXPECT_EQ(a.residual.samples, b.residual.samples);
}

TEST(Extract, CheckpointRoundTrip) {
  torch::manual_seed(8);
  Exformer model(tiny_config());
  Embedder emb(tiny_embedder());
  freeze(emb);
  const auto dir = testing::scratch_dir("ckpt");
  exformer_checkpoint(model, emb).save(dir / "m.ckpt");
  auto bundle = load_exformer(Checkpoint::load(dir / "m.ckpt"));
  std::mt19937_64 rng(9);
  const auto mix = testing::random_wave(800, rng);
  const auto enroll = testing::random_wave(3000, rng);
  EXPECT_EQ(extract(model, emb, mix, enroll).target.samples,
            extract(bundle.model, bundle.embedder, mix, enroll).target.samples);
  for (auto& p : bundle.embedder->parameters()) EXPECT_FALSE(p.requires_grad());
}

}  // namespace
}  // namespace tse
