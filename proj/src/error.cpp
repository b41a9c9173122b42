#include "dgseg/error.hpp"

namespace dgseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::FieldCountMismatch: return "FieldCountMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFiniteCoordinate: return "NonFiniteCoordinate";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidClassId: return "InvalidClassId";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NoFloor: return "NoFloor";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ClassAbsentInScene: return "ClassAbsentInScene";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::UninitializedClass: return "UninitializedClass";
    case ErrorCode::AllIgnored: return "AllIgnored";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message, int line) {
  std::string out(to_string(code));
  if (line > 0) out += " at line " + std::to_string(line);
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, int line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line) {}

}  // namespace dgseg
