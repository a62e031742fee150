#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nearmiss {

enum class ErrorCode {
  MalformedTrace,
  UnknownTool,
  DanglingResult,
  MissingReferenceTime,
  IndexOutOfRange,
  NotAnObject,
  MalformedCatalog,
  InvalidSpec,
  ExprSyntax,
  UnknownFunction,
  TypeMismatch,
  SelectorAmbiguous,
  SelectorTypeError,
  NoGuardForTool,
  ZeroDenominator,
  DuplicateTrajectoryId,
  UnknownTrajectoryId,
  MalformedReport,
  MalformedResponse,
  Transport,
  AuthMissing,
  InvalidConfig,
  InvalidRate,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTrace: return "MalformedTrace";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::DanglingResult: return "DanglingResult";
    case ErrorCode::MissingReferenceTime: return "MissingReferenceTime";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotAnObject: return "NotAnObject";
    case ErrorCode::MalformedCatalog: return "MalformedCatalog";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ExprSyntax: return "ExprSyntax";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::SelectorAmbiguous: return "SelectorAmbiguous";
    case ErrorCode::SelectorTypeError: return "SelectorTypeError";
    case ErrorCode::NoGuardForTool: return "NoGuardForTool";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::DuplicateTrajectoryId: return "DuplicateTrajectoryId";
    case ErrorCode::UnknownTrajectoryId: return "UnknownTrajectoryId";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidRate: return "InvalidRate";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nearmiss
