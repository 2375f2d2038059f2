#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tse {

enum class Errc {
  kInvalidArgument,
  kMissingFile,
  kUnsupportedFormat,
  kSampleRateMismatch,
  kTooShort,
  kLengthMismatch,
  kZeroReference,
  kZeroPower,
  kInsufficientData,
  kNonFinite,
  kDimensionMismatch,
  kCheckpointMismatch,
  kIo,
  kConfig,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid-argument";
    case Errc::kMissingFile: return "missing-file";
    case Errc::kUnsupportedFormat: return "unsupported-format";
    case Errc::kSampleRateMismatch: return "sample-rate-mismatch";
    case Errc::kTooShort: return "too-short";
    case Errc::kLengthMismatch: return "length-mismatch";
    case Errc::kZeroReference: return "zero-reference";
    case Errc::kZeroPower: return "zero-power";
    case Errc::kInsufficientData: return "insufficient-data";
    case Errc::kNonFinite: return "non-finite";
    case Errc::kDimensionMismatch: return "dimension-mismatch";
    case Errc::kCheckpointMismatch: return "checkpoint-mismatch";
    case Errc::kIo: return "io";
    case Errc::kConfig: return "config";
  }
  return "unknown";
}

// Every failure the toolkit reports carries one of the codes above so callers
// (and tests) can branch on the kind of failure rather than on message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace tse
