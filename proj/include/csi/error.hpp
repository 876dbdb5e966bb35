#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csi {

enum class ErrorKind {
  EmptyInput,
  SyntaxError,
  UnknownResidue,
  IoError,
  SchemaError,
  DanglingReference,
  EmptySide,
  TooFewExamples,
  InsufficientNegativeSpace,
  UnknownKeying,
  BatchTooLarge,
  DegenerateBatch,
  ShapeMismatch,
  NonFiniteValue,
  ZeroNormEmbedding,
  FrozenViolation,
  VersionMismatch,
  ChecksumMismatch,
  NoPositives,
  NoEligibleGroups,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` carries the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace csi
