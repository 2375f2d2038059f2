#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "test_util.hpp"
#include "tse/audio_io.hpp"
#include "tse/error.hpp"
#include "tse/mel.hpp"
#include "tse/metrics.hpp"
#include "tse/mixing.hpp"
#include "tse/synth.hpp"

namespace tse {
namespace {

using testing::random_signal;
using testing::random_wave;

// Brute-force SI-SDR in long double, no framework code involved.
double si_sdr_oracle(const std::vector<float>& s, const std::vector<float>& e) {
  long double ss = 0, se = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ss += static_cast<long double>(s[i]) * s[i];
    se += static_cast<long double>(s[i]) * e[i];
  }
  const long double a = se / ss;
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const long double proj = a * s[i];
    num += proj * proj;
    den += (proj - e[i]) * (proj - e[i]);
  }
  return static_cast<double>(10.0L * std::log10(num / den));
}

TEST(WavIo, SineRoundTripWithinOneLsb) {
  auto dir = testing::scratch_dir("wav");
  Waveform w;
  w.samples.resize(24000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = static_cast<float>(std::sin(2.0 * std::numbers::pi * 440.0 * i / 8000.0));
  }
  save_wav(dir / "sine.wav", w);
  const auto back = load_wav(dir / "sine.wav");
  ASSERT_EQ(back.size(), 24000u);
  EXPECT_EQ(back.sample_rate, 8000);
  for (std::size_t i = 0; i < w.size(); ++i) {
    ASSERT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0f / 32768.0f) << i;
  }
}

TEST(WavIo, ZerosStayZero) {
  auto dir = testing::scratch_dir("wav");
  save_wav(dir / "z.wav", Waveform::zeros(8000));
  const auto back = load_wav(dir / "z.wav");
  ASSERT_EQ(back.size(), 8000u);
  for (float x : back.samples) ASSERT_EQ(x, 0.0f);
}

TEST(WavIo, Errors) {
  auto dir = testing::scratch_dir("wav");
  try {
    load_wav(dir / "missing.wav");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMissingFile);
  }
  Waveform w = Waveform::zeros(100);
  w.sample_rate = 16000;
  save_wav(dir / "r16.wav", w);
  try {
    load_wav(dir / "r16.wav", 8000);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kSampleRateMismatch);
  }
}

TEST(Synth, DeterministicAndSeedSensitive) {
  const auto a = synth_speaker_utterance(3, 3.0, 7);
  const auto b = synth_speaker_utterance(3, 3.0, 7);
  const auto c = synth_speaker_utterance(3, 3.0, 8);
  ASSERT_EQ(a.size(), 24000u);
  ASSERT_EQ(c.size(), 24000u);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_GT(power(a.view()), 0.0);
}

TEST(Synth, SpeakersDiffer) {
  const auto p0 = speaker_profile(0);
  const auto p1 = speaker_profile(1);
  EXPECT_NE(p0.f0_hz, p1.f0_hz);
}

TEST(Mel, FrameCounts) {
  EXPECT_EQ(mel_frame_count(24000), 298);
  EXPECT_EQ(mel_frame_count(200), 1);
  const auto m = log_mel(torch::randn({2, 24000}));
  EXPECT_EQ(m.sizes(), (std::vector<std::int64_t>{2, 298, 40}));
  EXPECT_THROW(log_mel(torch::randn({1, 199})), Error);
}

TEST(Mel, ZeroInputHitsFloor) {
  const auto m = log_mel(torch::zeros({1, 1000}));
  EXPECT_TRUE(torch::allclose(m, torch::full_like(m, std::log(1e-6)), 0, 1e-6));
}

TEST(Mel, FilterbankRowsArePartitionedTriangles) {
  const auto fb = mel_filterbank();
  ASSERT_EQ(fb.sizes(), (std::vector<std::int64_t>{40, 129}));
  EXPECT_GE(fb.min().item<double>(), 0.0);
  EXPECT_LE(fb.max().item<double>(), 1.0 + 1e-12);
  for (int i = 0; i < 40; ++i) EXPECT_GT(fb[i].sum().item<double>(), 0.0) << "empty band " << i;
}

TEST(SiSdr, WorkedExampleIsZeroDb) {
  const std::vector<float> s{1.0f, -1.0f}, e{1.0f, 0.0f};
  EXPECT_NEAR(si_sdr(s, e), 0.0, 1e-9);
  const auto t = si_sdr(torch::tensor({1.0, -1.0}, torch::kFloat64),
                        torch::tensor({1.0, 0.0}, torch::kFloat64));
  EXPECT_NEAR(t.item<double>(), 0.0, 1e-9);
}

TEST(SiSdr, PerfectReconstructionIsCapped) {
  std::mt19937_64 rng(1);
  const auto s = random_signal(4000, rng);
  const double v = si_sdr(s, s);
  EXPECT_GE(v, 60.0);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(SiSdr, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_signal(257, rng);
    auto e = random_signal(257, rng, 0.5);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += s[i];
    EXPECT_NEAR(si_sdr(s, e), si_sdr_oracle(s, e), 1e-9);
    const auto ts = torch::from_blob(const_cast<float*>(s.data()), {257}, torch::kFloat32).to(torch::kFloat64);
    const auto te = torch::from_blob(e.data(), {257}, torch::kFloat32).to(torch::kFloat64);
    EXPECT_NEAR(si_sdr(ts, te).item<double>(), si_sdr_oracle(s, e), 1e-9);
  }
}

TEST(SiSdr, ScaleInvarianceProperty) {
  // Double-precision signals: scaling a float32 buffer rounds every sample,
  // which near-orthogonal pairs (SI-SDR around -60 dB) amplify to ~1e-5 dB.
  torch::manual_seed(3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = torch::randn({512}, torch::kFloat64);
    const auto e = torch::randn({512}, torch::kFloat64);
    const double a = scale(rng);
    EXPECT_NEAR(si_sdr(s, a * e).item<double>(), si_sdr(s, e).item<double>(), 1e-6);
  }
}

TEST(SiSdr, ScaleInvarianceFloatBuffers) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_signal(512, rng);
    auto e = random_signal(512, rng);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += s[i];
    const double base = si_sdr(s, e);
    const double a = scale(rng);
    for (auto& x : e) x = static_cast<float>(x * a);
    EXPECT_NEAR(si_sdr(s, e), base, 1e-6);
  }
}

TEST(SiSdr, PrefersTheRightSource) {
  std::mt19937_64 rng(4);
  const auto s = random_signal(1000, rng);
  const auto n = random_signal(1000, rng);
  EXPECT_GT(si_sdr(s, s), si_sdr(s, n));
}

TEST(SiSdr, ZeroMeanOption) {
  // A DC offset on the estimate is ignored once both signals are centred.
  std::mt19937_64 rng(5);
  auto s = random_signal(300, rng);
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
  for (auto& x : s) x = static_cast<float>(x - mean);
  auto e = s;
  for (auto& x : e) x += 0.5f;
  SiSdrOptions zm;
  zm.zero_mean = true;
  EXPECT_GE(si_sdr(s, e, zm), 60.0);
  EXPECT_LT(si_sdr(s, e), 20.0);
}

TEST(SiSdr, Errors) {
  const std::vector<float> a{1, 2, 3}, b{1, 2}, z{0, 0, 0};
  EXPECT_THROW(si_sdr(a, b), Error);
  try {
    si_sdr(z, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kZeroReference);
  }
}

TEST(SpeedPerturb, LengthsAndIdentity) {
  std::mt19937_64 rng(6);
  const auto w = random_wave(1000, rng);
  EXPECT_EQ(speed_perturb(w, 1.05).size(), 952u);
  EXPECT_EQ(speed_perturb(w, 0.95).size(), 1053u);
  EXPECT_EQ(speed_perturb(w, 1.0).samples, w.samples);
  EXPECT_THROW(speed_perturb(w, 1.2), Error);
}

TEST(SpeedPerturb, LinearInterpolationOfARamp) {
  // A ramp resampled by linear interpolation stays a ramp with slope factor.
  Waveform w;
  for (int i = 0; i < 200; ++i) w.samples.push_back(static_cast<float>(i) / 200.0f);
  const auto y = speed_perturb(w, 1.05);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    const double pos = i * 1.05;
    if (pos > 199.0) break;
    EXPECT_NEAR(y.samples[i], pos / 200.0, 1e-6);
  }
}

TEST(DynamicMix, ExactAdditivityAndSnr) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_wave(30000, rng);
    const auto b = random_wave(28000, rng, 0.1);
    MixSpec spec;
    spec.seed = static_cast<std::uint64_t>(trial);
    const auto m = dynamic_mix(a, b, spec);
    ASSERT_EQ(m.mixture.size(), 24000u);
    for (std::size_t i = 0; i < m.mixture.size(); ++i) {
      ASSERT_EQ(m.mixture.samples[i] - m.target.samples[i] - m.residual.samples[i], 0.0f);
    }
    EXPECT_NEAR(power(m.target.view()) / power(m.residual.view()), 1.0, 1e-5);
  }
}

TEST(DynamicMix, SnrIsHonoured) {
  std::mt19937_64 rng(8);
  const auto a = random_wave(24000, rng);
  const auto b = random_wave(24000, rng, 0.7);
  MixSpec spec;
  spec.snr_db = 5.0;
  const auto m = dynamic_mix(a, b, spec);
  const double snr = 10.0 * std::log10(power(m.target.view()) / power(m.residual.view()));
  EXPECT_NEAR(snr, 5.0, 1e-4);
}

TEST(DynamicMix, ShortSourceIsCentred) {
  std::mt19937_64 rng(9);
  Waveform a = random_wave(16000, rng);
  for (auto& x : a.samples) if (x == 0.0f) x = 1e-3f;
  const auto b = random_wave(30000, rng);
  const auto m = dynamic_mix(a, b, MixSpec{});
  ASSERT_EQ(m.target.size(), 24000u);
  for (std::size_t i = 0; i < 4000; ++i) {
    ASSERT_EQ(m.target.samples[i], 0.0f);
    ASSERT_EQ(m.target.samples[23999 - i], 0.0f);
  }
  for (std::size_t i = 0; i < 16000; ++i) ASSERT_EQ(m.target.samples[4000 + i], a.samples[i]);
}

TEST(DynamicMix, DeterministicGivenSeed) {
  std::mt19937_64 rng(10);
  const auto a = random_wave(40000, rng);
  const auto b = random_wave(40000, rng);
  MixSpec spec;
  spec.seed = 42;
  EXPECT_EQ(dynamic_mix(a, b, spec).mixture.samples, dynamic_mix(a, b, spec).mixture.samples);
}

TEST(DynamicMix, SilentSourceFails) {
  std::mt19937_64 rng(11);
  try {
    dynamic_mix(Waveform::zeros(30000), random_wave(30000, rng), MixSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kZeroPower);
  }
}

}  // namespace
}  // namespace tse
