#include "csi/error.hpp"

namespace csi {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UnknownResidue: return "UnknownResidue";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::EmptySide: return "EmptySide";
    case ErrorKind::TooFewExamples: return "TooFewExamples";
    case ErrorKind::InsufficientNegativeSpace: return "InsufficientNegativeSpace";
    case ErrorKind::UnknownKeying: return "UnknownKeying";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case ErrorKind::FrozenViolation: return "FrozenViolation";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::NoEligibleGroups: return "NoEligibleGroups";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace csi
