#include "pulsesense/error.hpp"

namespace pulsesense {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InconsistentSubcarrierCount: return "InconsistentSubcarrierCount";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::InsufficientFrames: return "InsufficientFrames";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::InvalidKernelSpec: return "InvalidKernelSpec";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::WindowLongerThanSeries: return "WindowLongerThanSeries";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TooFewSegments: return "TooFewSegments";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroTargetForMAPE: return "ZeroTargetForMAPE";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::ConfigUnknownKey: return "ConfigUnknownKey";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigUnknownKey:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidBand:
    case ErrorCode::InvalidKernelSpec:
    case ErrorCode::InvalidScenario:
      return ErrorCategory::Config;
    case ErrorCode::DivergedLoss:
    case ErrorCode::CacheMismatch:
      return ErrorCategory::Runtime;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

LineError::LineError(ErrorCode code, std::size_t line, const std::string& detail)
    : Error(code, "line " + std::to_string(line) + ": " + detail), line_(line) {}

}  // namespace pulsesense
