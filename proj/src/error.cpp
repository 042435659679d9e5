#include "isphar/error.hpp"

namespace isphar {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyRecording: return "EmptyRecording";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::NoPeaksFound: return "NoPeaksFound";
    case ErrorCode::FullyTrimmed: return "FullyTrimmed";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::MaskOutOfRange: return "MaskOutOfRange";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::ModelTooLarge: return "ModelTooLarge";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::StructuralInvariantViolated: return "StructuralInvariantViolated";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::MaWidthMismatch: return "MaWidthMismatch";
    case ErrorCode::InferenceSlowerThanWindow: return "InferenceSlowerThanWindow";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::TrainFnNondeterministic: return "TrainFnNondeterministic";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace isphar
