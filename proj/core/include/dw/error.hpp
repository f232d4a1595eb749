#pragma once

#include <stdexcept>
#include <string>

namespace dw {

enum class ErrorCode {
  kInvalidGeometry,
  kUnsupportedGeometry,
  kInvalidConfig,
  kInvalidInput,
  kNumericOverflow,
  kIoFailure,
  kDivergence,
};

const char* to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers (the CLI in
/// particular) whether this is a validation problem or a runtime failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Validation errors map to CLI exit code 2, everything else to 1.
  bool is_validation() const noexcept {
    return code_ == ErrorCode::kInvalidGeometry || code_ == ErrorCode::kUnsupportedGeometry ||
           code_ == ErrorCode::kInvalidConfig || code_ == ErrorCode::kInvalidInput;
  }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidGeometry: return "invalid-geometry";
    case ErrorCode::kUnsupportedGeometry: return "unsupported-geometry";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kNumericOverflow: return "numeric-overflow";
    case ErrorCode::kIoFailure: return "io-failure";
    case ErrorCode::kDivergence: return "divergence";
  }
  return "unknown";
}

#define DW_REQUIRE(cond, code, msg)                 \
  do {                                              \
    if (!(cond)) throw ::dw::Error((code), (msg));  \
  } while (0)

}  // namespace dw
