#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amplio {

enum class ErrorCode {
  InvalidInput,
  DimensionError,
  DegenerateVector,
  DegenerateConcept,
  DegenerateInterpolation,
  DegenerateProjection,
  EmptyIndex,
  TrainingDiverged,
  ProviderError,
  IngestError,
  NotFound,
  Forbidden,
  IoError,
};

/// Failure classes reported by external providers.
enum class ProviderErrorKind { None, Network, Timeout, Http, Refusal, Parse, NotConfigured };

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid_input";
    case ErrorCode::DimensionError: return "dimension_error";
    case ErrorCode::DegenerateVector: return "degenerate_vector";
    case ErrorCode::DegenerateConcept: return "degenerate_concept";
    case ErrorCode::DegenerateInterpolation: return "degenerate_interpolation";
    case ErrorCode::DegenerateProjection: return "degenerate_projection";
    case ErrorCode::EmptyIndex: return "empty_index";
    case ErrorCode::TrainingDiverged: return "training_diverged";
    case ErrorCode::ProviderError: return "provider_error";
    case ErrorCode::IngestError: return "ingest_error";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Forbidden: return "forbidden";
    case ErrorCode::IoError: return "io_error";
  }
  return "unknown";
}

inline std::string_view to_string(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::None: return "none";
    case ProviderErrorKind::Network: return "network";
    case ProviderErrorKind::Timeout: return "timeout";
    case ProviderErrorKind::Http: return "http";
    case ProviderErrorKind::Refusal: return "refusal";
    case ProviderErrorKind::Parse: return "parse";
    case ProviderErrorKind::NotConfigured: return "not_configured";
  }
  return "unknown";
}

/// Single exception type for the engine. `detail` carries extra context
/// (line numbers, raw provider replies) meant for display.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& message, std::string raw = {})
      : Error(ErrorCode::ProviderError, message, std::move(raw)), kind_(kind) {}

  ProviderErrorKind kind() const noexcept { return kind_; }
  /// Raw provider reply, retained so refusals can be shown to the user.
  const std::string& raw_reply() const noexcept { return detail(); }

 private:
  ProviderErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message, std::string detail = {}) {
  throw Error(code, message, std::move(detail));
}

}  // namespace amplio
