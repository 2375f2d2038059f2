#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tse {

inline constexpr int kDefaultSampleRate = 8000;

// Mono time-domain signal. Amplitudes are nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<float> s, int rate = kDefaultSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  static Waveform zeros(std::size_t n, int rate = kDefaultSampleRate) {
    return Waveform(std::vector<float>(n, 0.0f), rate);
  }

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::span<const float> view() const noexcept { return samples; }
  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  // Throws Error(kInvalidArgument / kNonFinite) when the type invariants do
  // not hold: at least one sample, all finite, positive rate.
  void validate() const;
};

// Mean squared amplitude.
double power(std::span<const float> x);

}  // namespace tse
