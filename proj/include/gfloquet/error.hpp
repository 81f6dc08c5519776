#pragma once

#include <stdexcept>
#include <string>

namespace gfloquet {

enum class ErrorCode {
  InvalidArgument,
  InvalidSystem,
  Resolution,
  Convergence,
  NotTruncatable,
  Eigensolver,
  Io,
};

/// Exception carrying a machine-readable category; the C API maps the
/// category onto its status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gfloquet
