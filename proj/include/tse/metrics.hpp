#pragma once

#include <span>

#include <torch/torch.h>

#include "tse/waveform.hpp"

namespace tse {

inline constexpr double kSiSdrEps = 1e-8;

struct SiSdrOptions {
  bool zero_mean = false;
  double eps = kSiSdrEps;
};

// Scale-invariant SDR in dB:
//   alpha = <est, ref> / |ref|^2
//   10 log10(max(|alpha ref|^2, eps) / max(|alpha ref - est|^2, eps))
// The eps floors only engage for (near-)perfect or (near-)orthogonal
// estimates, capping the score instead of returning +/- infinity.
double si_sdr(std::span<const float> reference, std::span<const float> estimate,
              const SiSdrOptions& opts = {});
double si_sdr(const Waveform& reference, const Waveform& estimate,
              const SiSdrOptions& opts = {});

// Differentiable counterpart over the last dimension; leading dimensions are
// treated as a batch. Returns one value per batch row.
torch::Tensor si_sdr(const torch::Tensor& reference,
                     const torch::Tensor& estimate,
                     const SiSdrOptions& opts = {});

}  // namespace tse
