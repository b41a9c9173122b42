#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dgseg {

enum class ErrorCode {
  MalformedHeader,
  MalformedRecord,
  FieldCountMismatch,
  LabelOutOfRange,
  NonFiniteCoordinate,
  IoFailure,
  InvalidClassId,
  InvalidArgument,
  EmptyCloud,
  TooFewSamples,
  NoFloor,
  EmptyResult,
  ShapeMismatch,
  EmptyBatch,
  ConfigError,
  ClassAbsentInScene,
  NonFiniteInput,
  UninitializedClass,
  AllIgnored,
  LengthMismatch,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library. `line` is the 1-based line of an input
// file when the error came from parsing one, 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int line = 0);

  ErrorCode code() const noexcept { return code_; }
  int line() const noexcept { return line_; }
  bool is_io() const noexcept { return code_ == ErrorCode::IoFailure; }

 private:
  ErrorCode code_;
  int line_;
};

}  // namespace dgseg
