#pragma once

#include <filesystem>

#include "tse/waveform.hpp"

namespace tse {

// Reads a RIFF/WAVE file holding 16-bit PCM mono audio. When expected_rate is
// positive a file at any other rate is rejected with kSampleRateMismatch;
// nothing is ever resampled.
Waveform load_wav(const std::filesystem::path& path,
                  int expected_rate = kDefaultSampleRate);

// Writes 16-bit PCM mono. Samples are clamped to the representable range.
void save_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace tse
