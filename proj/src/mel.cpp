#include "tse/mel.hpp"

#include <cmath>

#include "tse/error.hpp"

namespace tse {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

std::int64_t mel_frame_count(std::int64_t n_samples, const MelConfig& cfg) {
  if (n_samples < cfg.win_length) return 0;
  return 1 + (n_samples - cfg.win_length) / cfg.hop_length;
}

torch::Tensor mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double top = hz_to_mel(0.5 * cfg.sample_rate);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(top * i / (cfg.n_mels + 1));
  }
  auto fb = torch::zeros({cfg.n_mels, n_bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      acc[m][b] = w;
    }
  }
  return fb;
}

torch::Tensor log_mel(const torch::Tensor& waves, const MelConfig& cfg) {
  const std::int64_t n = waves.size(-1);
  require(n >= cfg.win_length, Errc::kTooShort,
          "waveform of " + std::to_string(n) + " samples is shorter than one " +
              std::to_string(cfg.win_length) + "-sample analysis window");
  const auto opts = waves.options();
  // [..., n_frames, win]
  auto frames = waves.unfold(-1, cfg.win_length, cfg.hop_length);
  auto window = torch::hann_window(cfg.win_length, /*periodic=*/true, opts);
  auto spec = torch::fft::rfft(frames * window, cfg.n_fft);
  auto pow = torch::real(spec).square() + torch::imag(spec).square();
  auto fb = mel_filterbank(cfg).to(opts.dtype()).to(waves.device());
  auto mel = torch::matmul(pow, fb.transpose(0, 1));
  return torch::log(torch::clamp_min(mel, cfg.log_floor));
}

LogMelFrames mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  require(!w.empty(), Errc::kInvalidArgument, "empty waveform");
  auto x = torch::from_blob(const_cast<float*>(w.samples.data()),
                            {static_cast<std::int64_t>(w.size())}, torch::kFloat32);
  LogMelFrames out;
  {
    torch::NoGradGuard no_grad;
    out.frames = log_mel(x, cfg).contiguous();
  }
  out.n_mels = cfg.n_mels;
  return out;
}

}  // namespace tse
