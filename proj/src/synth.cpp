#include "tse/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "tse/error.hpp"

namespace tse {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Magnitude response of a resonance centred at `centre` with bandwidth `bw`.
double resonance(double f, double centre, double bw) {
  const double d = (f - centre) / (0.5 * bw);
  return 1.0 / std::sqrt(1.0 + d * d);
}

struct Syllable {
  std::size_t begin;
  std::size_t end;
  double f0_scale;
  std::array<double, 3> formant_scale;
  double gain;
};

// Two-pole resonator filter state for the noise branch.
struct Resonator {
  double a1 = 0, a2 = 0, g = 0;
  double y1 = 0, y2 = 0;

  Resonator(double centre, double bw, int rate) {
    const double r = std::exp(-std::numbers::pi * bw / rate);
    a1 = 2.0 * r * std::cos(kTwoPi * centre / rate);
    a2 = -r * r;
    g = 1.0 - r;
  }

  double step(double x) {
    const double y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

SpeakerProfile speaker_profile(int speaker_id) {
  std::seed_seq seq{0x5eedu, 0x51ea4u, static_cast<unsigned>(speaker_id)};
  std::mt19937_64 rng(seq);
  SpeakerProfile p{};
  p.f0_hz = uniform(rng, 85.0, 260.0);
  p.f0_depth = uniform(rng, 0.04, 0.18);
  p.formant_hz = {uniform(rng, 300.0, 900.0), uniform(rng, 950.0, 2300.0),
                  uniform(rng, 2400.0, 3500.0)};
  p.bandwidth_hz = {uniform(rng, 60.0, 140.0), uniform(rng, 80.0, 180.0),
                    uniform(rng, 120.0, 260.0)};
  p.tilt = uniform(rng, 0.6, 1.4);
  p.noise_mix = uniform(rng, 0.02, 0.15);
  p.syllable_rate_hz = uniform(rng, 3.0, 6.0);
  return p;
}

Waveform synth_speaker_utterance(int speaker_id, double duration_s,
                                 std::uint64_t seed, int sample_rate) {
  require(duration_s > 0.0 && std::isfinite(duration_s), Errc::kInvalidArgument,
          "utterance duration must be positive");
  require(sample_rate > 0, Errc::kInvalidArgument, "sample rate must be positive");

  const SpeakerProfile prof = speaker_profile(speaker_id);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  require(n >= 1, Errc::kInvalidArgument, "utterance shorter than one sample");

  const std::uint64_t dur_bits = std::bit_cast<std::uint64_t>(duration_s);
  std::seed_seq seq{static_cast<unsigned>(speaker_id),
                    static_cast<unsigned>(seed), static_cast<unsigned>(seed >> 32),
                    static_cast<unsigned>(dur_bits), static_cast<unsigned>(dur_bits >> 32)};
  std::mt19937_64 rng(seq);

  // Syllable schedule: voiced bursts separated by short pauses.
  std::vector<Syllable> syllables;
  std::size_t t = static_cast<std::size_t>(uniform(rng, 0.0, 0.08) * sample_rate);
  while (t < n) {
    const double len_s = uniform(rng, 0.6, 1.4) / prof.syllable_rate_hz;
    const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(len_s * sample_rate));
    Syllable s{};
    s.begin = t;
    s.end = std::min(n, t + len);
    s.f0_scale = uniform(rng, 0.9, 1.1);
    for (auto& f : s.formant_scale) f = uniform(rng, 0.88, 1.12);
    s.gain = uniform(rng, 0.5, 1.0);
    syllables.push_back(s);
    t = s.end + static_cast<std::size_t>(uniform(rng, 0.02, 0.12) * sample_rate);
  }

  const double nyquist = 0.5 * sample_rate;
  const double contour_hz = uniform(rng, 0.5, 2.0);
  const double contour_phase = uniform(rng, 0.0, kTwoPi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> out(n, 0.0);
  double phase = uniform(rng, 0.0, kTwoPi);
  std::vector<double> harmonic_gain;
  for (const Syllable& s : syllables) {
    std::array<double, 3> formants{};
    for (int i = 0; i < 3; ++i) formants[i] = prof.formant_hz[i] * s.formant_scale[i];
    std::array<Resonator, 3> noise_filters{
        Resonator(formants[0], prof.bandwidth_hz[0], sample_rate),
        Resonator(formants[1], prof.bandwidth_hz[1], sample_rate),
        Resonator(formants[2], prof.bandwidth_hz[2], sample_rate)};

    const double base_f0 = prof.f0_hz * s.f0_scale;
    const auto max_k = static_cast<int>((nyquist - 100.0) / (base_f0 * (1.0 + prof.f0_depth)));
    harmonic_gain.assign(static_cast<std::size_t>(std::max(max_k, 1)), 0.0);
    for (int k = 1; k <= max_k; ++k) {
      const double f = k * base_f0;
      double g = 0.0;
      for (int i = 0; i < 3; ++i) g += resonance(f, formants[i], prof.bandwidth_hz[i]);
      harmonic_gain[k - 1] = g * std::pow(double(k), -prof.tilt);
    }

    const double len = static_cast<double>(s.end - s.begin);
    for (std::size_t i = s.begin; i < s.end; ++i) {
      const double time = static_cast<double>(i) / sample_rate;
      const double f0 =
          base_f0 * (1.0 + prof.f0_depth * std::sin(kTwoPi * contour_hz * time + contour_phase));
      phase = std::fmod(phase + kTwoPi * f0 / sample_rate, kTwoPi);
      double voiced = 0.0;
      for (int k = 1; k <= max_k; ++k) voiced += harmonic_gain[k - 1] * std::sin(k * phase);
      const double white = gauss(rng);
      double noise = 0.0;
      for (auto& r : noise_filters) noise += r.step(white);
      // Raised-cosine envelope over the syllable.
      const double env = 0.5 - 0.5 * std::cos(kTwoPi * (static_cast<double>(i - s.begin) + 0.5) / len);
      out[i] = s.gain * env * ((1.0 - prof.noise_mix) * voiced + prof.noise_mix * 8.0 * noise);
    }
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  const double target_peak = 0.9 * uniform(rng, 0.55, 1.0);
  const double scale = peak > 0.0 ? target_peak / peak : 0.0;

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = std::clamp(static_cast<float>(out[i] * scale), -0.9f, 0.9f);
  }
  return w;
}

}  // namespace tse
