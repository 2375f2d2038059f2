#include "tse/mixing.hpp"

#include <cmath>

#include "tse/error.hpp"

namespace tse {

namespace {

constexpr int kMaxCropAttempts = 16;

Waveform crop_nonsilent(const Waveform& w, std::size_t n, std::mt19937_64& rng,
                        const char* which) {
  for (int attempt = 0; attempt < kMaxCropAttempts; ++attempt) {
    Waveform seg = crop_or_pad(w, n, rng);
    if (power(seg.view()) > 0.0) return seg;
    if (w.size() <= n) break;  // padding is deterministic; retrying cannot help
  }
  fail(Errc::kZeroPower, std::string("dynamic_mix: ") + which +
                             " source has no energy in any sampled crop");
}

}  // namespace

TrainItem TrainItem::make_labeled(Waveform mixture, Waveform target,
                                  Waveform residual, Waveform enrollment) {
  TrainItem item;
  item.mixture = std::move(mixture);
  item.enrollment = std::move(enrollment);
  item.target = std::move(target);
  item.residual = std::move(residual);
  item.labeled = true;
  item.validate();
  return item;
}

TrainItem TrainItem::make_unlabeled(Waveform mixture, Waveform enrollment) {
  TrainItem item;
  item.mixture = std::move(mixture);
  item.enrollment = std::move(enrollment);
  item.labeled = false;
  item.validate();
  return item;
}

void TrainItem::validate() const {
  mixture.validate();
  enrollment.validate();
  if (labeled) {
    require(target.has_value() && residual.has_value(), Errc::kInvalidArgument,
            "labeled item is missing its reference signals");
    require(target->size() == mixture.size() && residual->size() == mixture.size(),
            Errc::kLengthMismatch, "references must match the mixture length");
  } else {
    require(!target.has_value() && !residual.has_value(), Errc::kInvalidArgument,
            "unlabeled item must not carry reference signals");
  }
}

Waveform speed_perturb(const Waveform& w, double factor, const SpeedRange& range) {
  require(factor >= range.min && factor <= range.max, Errc::kInvalidArgument,
          "speed factor " + std::to_string(factor) + " outside [" +
              std::to_string(range.min) + ", " + std::to_string(range.max) + "]");
  w.validate();
  const auto len = w.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(len) / factor));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(std::max<std::size_t>(out_len, 1));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= len) {
      out.samples[i] = w.samples[len - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = static_cast<float>(w.samples[i0] * (1.0 - frac) +
                                        w.samples[i0 + 1] * frac);
  }
  return out;
}

Waveform crop_or_pad(const Waveform& w, std::size_t n, std::mt19937_64& rng) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.size() >= n) {
    std::uniform_int_distribution<std::size_t> start(0, w.size() - n);
    const auto s = static_cast<std::ptrdiff_t>(start(rng));
    out.samples.assign(w.samples.begin() + s,
                       w.samples.begin() + s + static_cast<std::ptrdiff_t>(n));
    return out;
  }
  const std::size_t left = (n - w.size()) / 2;
  out.samples.assign(n, 0.0f);
  std::copy(w.samples.begin(), w.samples.end(),
            out.samples.begin() + static_cast<std::ptrdiff_t>(left));
  return out;
}

MixResult dynamic_mix(const Waveform& src_a, const Waveform& src_b,
                      const MixSpec& spec) {
  src_a.validate();
  src_b.validate();
  require(src_a.sample_rate == src_b.sample_rate, Errc::kSampleRateMismatch,
          "dynamic_mix: sources have different sample rates");
  require(spec.segment_seconds > 0.0, Errc::kInvalidArgument,
          "dynamic_mix: segment length must be positive");
  require(std::isfinite(spec.snr_db), Errc::kInvalidArgument, "dynamic_mix: SNR not finite");

  const auto n = static_cast<std::size_t>(
      std::llround(spec.segment_seconds * src_a.sample_rate));
  std::mt19937_64 rng(spec.seed);
  Waveform target = crop_nonsilent(src_a, n, rng, "target");
  Waveform interf = crop_nonsilent(src_b, n, rng, "interference");

  const double gain = std::sqrt(power(target.view()) /
                                (power(interf.view()) * std::pow(10.0, spec.snr_db / 10.0)));
  MixResult out;
  out.mixture.sample_rate = target.sample_rate;
  out.mixture.samples.resize(n);
  out.residual.sample_rate = target.sample_rate;
  out.residual.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float scaled = static_cast<float>(interf.samples[i] * gain);
    out.mixture.samples[i] = target.samples[i] + scaled;
    // The residual is whatever the float sum actually added, so that
    // mixture - target - residual == 0 holds exactly.
    out.residual.samples[i] = out.mixture.samples[i] - target.samples[i];
  }
  out.target = std::move(target);
  return out;
}

}  // namespace tse
