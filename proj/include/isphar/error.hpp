#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isphar {

enum class ErrorCode {
  InvalidArgument,
  EmptyRecording,
  EmptySeries,
  SeriesTooShort,
  NoPeaksFound,
  FullyTrimmed,
  InvalidFraction,
  MaskOutOfRange,
  ParseError,
  RateMismatch,
  InvalidSpec,
  EmptyPool,
  ClassTooSmall,
  InvalidDims,
  DimMismatch,
  SingleClass,
  NonFiniteLoss,
  UnknownLabel,
  ModelTooLarge,
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  StructuralInvariantViolated,
  ManifestMismatch,
  MaWidthMismatch,
  InferenceSlowerThanWindow,
  UnknownClass,
  TrainFnNondeterministic,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures surface as this exception; code() identifies the kind.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace isphar
