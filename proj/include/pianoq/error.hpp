#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pianoq {

/// Failure categories raised by the library. The CLI maps them onto exit codes.
enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  CorruptHeader,
  WindowOverflow,
  InvalidRange,
  BandMismatch,
  DomainError,
  InvalidRate,
  EmptyInput,
  DegenerateInput,
  TooFewClasses,
  ZeroCount,
  ShapeMismatch,
  EmptyBatch,
  EmptySplit,
  TooShort,
  LabelOrderMismatch,
  EmptySurvey,
  LengthMismatch,
  ZeroVariance,
  InvalidArgument,
  Internal,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::WindowOverflow: return "WindowOverflow";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::BandMismatch: return "BandMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::LabelOrderMismatch: return "LabelOrderMismatch";
    case ErrorCode::EmptySurvey: return "EmptySurvey";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// True for failures caused by the caller's data rather than by a numeric fault.
inline bool is_input_error(ErrorCode code) {
  return code != ErrorCode::Internal;
}

}  // namespace pianoq
