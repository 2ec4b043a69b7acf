#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pulsesense {

enum class ErrorCode {
  // ingest
  MalformedLine,
  InconsistentSubcarrierCount,
  NonMonotonicTimestamp,
  SchemaMismatch,
  ValueOutOfRange,
  InsufficientOverlap,
  InsufficientFrames,
  // dsp
  EmptyStream,
  InvalidBand,
  InvalidKernelSpec,
  SeriesTooShort,
  WindowLongerThanSeries,
  // model
  ShapeMismatch,
  CacheMismatch,
  BadMagic,
  ChecksumMismatch,
  // training
  TooFewSegments,
  EmptyTrainSet,
  DivergedLoss,
  // metrics
  LengthMismatch,
  ZeroTargetForMAPE,
  EmptyInput,
  // synth
  InvalidScenario,
  // cli / io
  ConfigUnknownKey,
  ConfigInvalid,
  IoError,
};

/// Broad failure class; the CLI maps each one to an exit code.
enum class ErrorCategory { Config, Data, Runtime };

std::string_view error_name(ErrorCode code) noexcept;
ErrorCategory error_category(ErrorCode code) noexcept;

/// Exception carrying a typed error code. `what()` is prefixed with the code name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

/// Error tied to a 1-based line of a text input.
class LineError : public Error {
 public:
  LineError(ErrorCode code, std::size_t line, const std::string& detail);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pulsesense
