#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyncov {

// Failure categories. The CLI prints the category name verbatim on stderr so
// callers can dispatch on it.
enum class ErrorKind {
  NotPositiveDefinite,
  DimensionMismatch,
  InvalidDof,
  InvalidArgument,
  InvalidParams,
  EmptyCloud,
  DegenerateWeights,
  RejectionBudgetExceeded,
  TooFewObservations,
  NoFeasibleStart,
  NonFinite,
  EmptyRun,
  RunAborted,
  DegenerateTable,
  UnsupportedK,
  UnsupportedAlpha,
  FileNotFound,
  EmptyFile,
  HeaderMismatch,
  NonPositivePrice,
  ZeroVarianceColumn,
  ParseError,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace dyncov
