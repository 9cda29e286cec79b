#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dctwa {

enum class ErrorCode {
  NormMismatch,
  InvalidDensityMatrix,
  NegativeWeight,
  SingularRegion,
  QuadratureFailure,
  PoleError,
  DimensionTooLarge,
  AsymmetricCouplings,
  DimensionMismatch,
  IntegratorDivergence,
  AllRatesZero,
  UnsupportedTerm,
  SingularCoordinate,
  UnsupportedChannel,
  UnknownPreset,
  ConfigInvalid,
  EngineChannelMismatch,
  GridMismatch,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NormMismatch: return "NormMismatch";
    case ErrorCode::InvalidDensityMatrix: return "InvalidDensityMatrix";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::SingularRegion: return "SingularRegion";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::PoleError: return "PoleError";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::AsymmetricCouplings: return "AsymmetricCouplings";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IntegratorDivergence: return "IntegratorDivergence";
    case ErrorCode::AllRatesZero: return "AllRatesZero";
    case ErrorCode::UnsupportedTerm: return "UnsupportedTerm";
    case ErrorCode::SingularCoordinate: return "SingularCoordinate";
    case ErrorCode::UnsupportedChannel: return "UnsupportedChannel";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::EngineChannelMismatch: return "EngineChannelMismatch";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dctwa
