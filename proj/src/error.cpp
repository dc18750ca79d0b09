#include "packgen/error.hpp"

namespace packgen {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::UnsupportedFormat: return "unsupported_format";
    case ErrorCode::Config: return "config";
    case ErrorCode::MissingArtifact: return "missing_artifact";
    case ErrorCode::Training: return "training";
    case ErrorCode::Io: return "io";
    case ErrorCode::UndefinedMetric: return "undefined_metric";
    case ErrorCode::AlreadyExists: return "already_exists";
    case ErrorCode::SplitOverlap: return "split_overlap";
  }
  return "unknown";
}

}  // namespace packgen
