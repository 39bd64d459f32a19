#pragma once

#include <stdexcept>
#include <string>

namespace abd {

enum class ErrorCode {
  NotFound,
  InvalidRequest,
  Config,
  Conservation,
  Io,
  Unauthorized,
};

const char* to_string(ErrorCode code);

/// Error raised by every module; callers map the code onto exit codes or
/// HTTP status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace abd
