#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "tse/waveform.hpp"

namespace tse {

struct MelConfig {
  int sample_rate = kDefaultSampleRate;
  int win_length = 200;  // 25 ms at 8 kHz
  int hop_length = 80;   // 10 ms at 8 kHz
  int n_fft = 256;
  int n_mels = 40;
  double log_floor = 1e-6;
};

struct LogMelFrames {
  torch::Tensor frames;  // [n_frames, n_mels], float32
  int n_mels = 0;

  std::int64_t n_frames() const { return frames.size(0); }
};

// 1 + floor((L - win) / hop); zero when L < win.
std::int64_t mel_frame_count(std::int64_t n_samples, const MelConfig& cfg = {});

// Triangular HTK-scale filters, [n_mels, n_fft / 2 + 1].
torch::Tensor mel_filterbank(const MelConfig& cfg = {});

// Differentiable log-mel power spectrogram over the last dimension:
// [..., L] -> [..., n_frames, n_mels]. Keeps the dtype of the input.
torch::Tensor log_mel(const torch::Tensor& waves, const MelConfig& cfg = {});

LogMelFrames mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

}  // namespace tse
