#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edich {

enum class ErrorCode {
  InvalidGrid,
  UnknownSystem,
  InvalidParameter,
  ParseError,
  DimensionError,
  NonMonotoneTime,
  OutOfDomain,
  StepUnstable,
  SingularTransition,
  OffGrid,
  InvalidProjection,
  OnAxisEigenvalue,
  NoGap,
  DegenerateSplit,
  NoDecay,
  VerificationFailed,
  NotBounded,
  NotDichotomic,
  GridTooCoarse,
  TailDominates,
  BoundViolated,
  NotAdmissible,
  TheoremViolationSuspected,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::UnknownSystem: return "UnknownSystem";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::StepUnstable: return "StepUnstable";
    case ErrorCode::SingularTransition: return "SingularTransition";
    case ErrorCode::OffGrid: return "OffGrid";
    case ErrorCode::InvalidProjection: return "InvalidProjection";
    case ErrorCode::OnAxisEigenvalue: return "OnAxisEigenvalue";
    case ErrorCode::NoGap: return "NoGap";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::NoDecay: return "NoDecay";
    case ErrorCode::VerificationFailed: return "VerificationFailed";
    case ErrorCode::NotBounded: return "NotBounded";
    case ErrorCode::NotDichotomic: return "NotDichotomic";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::TailDominates: return "TailDominates";
    case ErrorCode::BoundViolated: return "BoundViolated";
    case ErrorCode::NotAdmissible: return "NotAdmissible";
    case ErrorCode::TheoremViolationSuspected: return "TheoremViolationSuspected";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace edich
