#include "tse/metrics.hpp"

#include <cmath>
#include <numeric>

#include "tse/error.hpp"

namespace tse {

double si_sdr(std::span<const float> reference, std::span<const float> estimate,
              const SiSdrOptions& opts) {
  require(reference.size() == estimate.size(), Errc::kLengthMismatch,
          "si_sdr: reference has " + std::to_string(reference.size()) +
              " samples, estimate has " + std::to_string(estimate.size()));
  require(!reference.empty(), Errc::kInvalidArgument, "si_sdr: empty signals");
  const std::size_t n = reference.size();

  double mean_s = 0.0, mean_e = 0.0;
  if (opts.zero_mean) {
    for (std::size_t i = 0; i < n; ++i) {
      mean_s += reference[i];
      mean_e += estimate[i];
    }
    mean_s /= static_cast<double>(n);
    mean_e /= static_cast<double>(n);
  }

  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = reference[i] - mean_s;
    const double e = estimate[i] - mean_e;
    dot += e * s;
    ref_energy += s * s;
  }
  require(ref_energy > 0.0, Errc::kZeroReference, "si_sdr: all-zero reference");
  const double alpha = dot / ref_energy;

  double target = 0.0, distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double proj = alpha * (reference[i] - mean_s);
    const double err = proj - (estimate[i] - mean_e);
    target += proj * proj;
    distortion += err * err;
  }
  return 10.0 * std::log10(std::max(target, opts.eps) / std::max(distortion, opts.eps));
}

double si_sdr(const Waveform& reference, const Waveform& estimate,
              const SiSdrOptions& opts) {
  return si_sdr(reference.view(), estimate.view(), opts);
}

torch::Tensor si_sdr(const torch::Tensor& reference, const torch::Tensor& estimate,
                     const SiSdrOptions& opts) {
  require(reference.sizes() == estimate.sizes(), Errc::kLengthMismatch,
          "si_sdr: reference and estimate shapes differ");
  auto s = reference;
  auto e = estimate;
  if (opts.zero_mean) {
    s = s - s.mean(-1, /*keepdim=*/true);
    e = e - e.mean(-1, /*keepdim=*/true);
  }
  auto ref_energy = s.square().sum(-1, /*keepdim=*/true);
  require(ref_energy.min().item<double>() > 0.0, Errc::kZeroReference,
          "si_sdr: all-zero reference");
  auto alpha = (e * s).sum(-1, /*keepdim=*/true) / ref_energy;
  auto proj = alpha * s;
  auto distortion = (proj - e).square().sum(-1);
  auto target = proj.square().sum(-1);
  return 10.0 * torch::log10(torch::clamp_min(target, opts.eps) /
                             torch::clamp_min(distortion, opts.eps));
}

}  // namespace tse
