#ifndef TOXCTX_ERROR_H_
#define TOXCTX_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toxctx {

enum class ErrorKind {
  kParse,
  kValidation,
  kConfig,
  kSizing,
  kBudget,
  kRegistration,
  kDegenerateClass,
  kUndefinedMetric,
  kPhase,
  kCoverage,
  kInput,
  kMissingArtifact,
  kIo,
  kInternal,
};

const char* ErrorKindName(ErrorKind kind);

// All library failures are reported through this type. The kind drives the
// command line exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorKind::kParse,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  // 1-based line number in the input stream.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSizing: return "sizing";
    case ErrorKind::kBudget: return "budget";
    case ErrorKind::kRegistration: return "registration";
    case ErrorKind::kDegenerateClass: return "degenerate-class";
    case ErrorKind::kUndefinedMetric: return "undefined-metric";
    case ErrorKind::kPhase: return "phase";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kMissingArtifact: return "missing-artifact";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace toxctx

#endif  // TOXCTX_ERROR_H_
