#include "core/error.hpp"

namespace engage {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kFingerprint: return "fingerprint";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kUndefinedMetric: return "undefined_metric";
  }
  return "unknown";
}

}  // namespace engage
