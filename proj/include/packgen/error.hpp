#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace packgen {

enum class ErrorCode {
  InvalidArgument,
  UnsupportedFormat,
  Config,
  MissingArtifact,
  Training,
  Io,
  UndefinedMetric,
  AlreadyExists,
  SplitOverlap,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library. The code maps 1:1 onto the C API
/// status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace packgen
