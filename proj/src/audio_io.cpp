#include "tse/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tse/error.hpp"

namespace tse {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

void Waveform::validate() const {
  require(!samples.empty(), Errc::kInvalidArgument, "waveform has no samples");
  require(sample_rate > 0, Errc::kInvalidArgument, "sample rate must be positive");
  for (float v : samples) {
    require(std::isfinite(v), Errc::kNonFinite, "waveform has non-finite samples");
  }
}

double power(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += double(v) * v;
  return acc / static_cast<double>(x.size());
}

Waveform load_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kMissingFile, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string name = path.string();
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          Errc::kUnsupportedFormat, name + ": not a RIFF/WAVE file");

  int channels = 0, bits = 0, rate = 0, format = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::size_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    len = std::min(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = static_cast<int>(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  require(format == 1 && bits == 16, Errc::kUnsupportedFormat,
          name + ": only 16-bit PCM is supported");
  require(channels == 1, Errc::kUnsupportedFormat,
          name + ": expected mono, got " + std::to_string(channels) + " channels");
  require(data != nullptr, Errc::kUnsupportedFormat, name + ": no data chunk");
  if (expected_rate > 0 && rate != expected_rate) {
    fail(Errc::kSampleRateMismatch, name + ": sample rate " + std::to_string(rate) +
                                        " Hz, expected " + std::to_string(expected_rate));
  }

  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
    w.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return w;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * std::size_t(n));
  put_tag(out, "RIFF");
  put_u32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, 2 * n);
  for (float v : w.samples) {
    double q = std::nearbyint(double(v) * 32768.0);
    q = std::clamp(q, -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) fail(Errc::kIo, "short write to " + path.string());
}

}  // namespace tse
