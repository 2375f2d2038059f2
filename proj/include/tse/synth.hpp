#pragma once

#include <array>
#include <cstdint>

#include "tse/waveform.hpp"

namespace tse {

// Voice parameters derived deterministically from a speaker id. These stand in
// for a real speaker's vocal characteristics in the synthetic corpus.
struct SpeakerProfile {
  double f0_hz;             // mean fundamental
  double f0_depth;          // relative intonation depth
  std::array<double, 3> formant_hz;
  std::array<double, 3> bandwidth_hz;
  double tilt;              // harmonic amplitude ~ k^-tilt
  double noise_mix;         // share of formant-filtered noise
  double syllable_rate_hz;
};

SpeakerProfile speaker_profile(int speaker_id);

// Harmonic stack on a speaker-specific fundamental, shaped by the speaker's
// formants, plus formant-filtered noise, segmented into syllable-like bursts.
// Bit-identical for identical (speaker_id, duration_s, seed, sample_rate).
// Peak amplitude never exceeds 0.9.
Waveform synth_speaker_utterance(int speaker_id, double duration_s,
                                 std::uint64_t seed,
                                 int sample_rate = kDefaultSampleRate);

}  // namespace tse
