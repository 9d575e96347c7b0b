#pragma once

#include <stdexcept>
#include <string>

namespace engage {

enum class ErrorCode {
  kValidation,
  kDegenerate,
  kShape,
  kOutOfRange,
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kParse,
  kFingerprint,
  kConfig,
  kNumeric,
  kUndefinedMetric,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) raise(code, message);
}

}  // namespace engage
