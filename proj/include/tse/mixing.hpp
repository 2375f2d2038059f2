#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "tse/waveform.hpp"

namespace tse {

struct MixSpec {
  double snr_db = 0.0;  // target-over-interference power ratio
  double segment_seconds = 3.0;
  std::uint64_t seed = 0;
};

struct SpeedRange {
  double min = 0.95;
  double max = 1.05;
};

// Mixture, enrollment and, for labeled items only, the two references.
struct TrainItem {
  Waveform mixture;
  Waveform enrollment;
  std::optional<Waveform> target;
  std::optional<Waveform> residual;
  bool labeled = false;

  static TrainItem make_labeled(Waveform mixture, Waveform target,
                                Waveform residual, Waveform enrollment);
  static TrainItem make_unlabeled(Waveform mixture, Waveform enrollment);

  void validate() const;
};

struct MixResult {
  Waveform mixture;
  Waveform target;
  Waveform residual;  // the interference after SNR scaling
};

// Resamples by linear interpolation of sample positions; the result has
// round(L / factor) samples. Factors outside `range` are rejected.
Waveform speed_perturb(const Waveform& w, double factor,
                       const SpeedRange& range = {});

// Random window of n samples. Shorter inputs are zero-padded on both ends,
// the odd sample (if any) going to the right.
Waveform crop_or_pad(const Waveform& w, std::size_t n, std::mt19937_64& rng);

// Crops a segment from each source, scales the interference to the requested
// SNR and sums. mixture - target - residual is exactly zero sample-wise.
MixResult dynamic_mix(const Waveform& src_a, const Waveform& src_b,
                      const MixSpec& spec);

}  // namespace tse
