#include "dyncov/error.hpp"

namespace dyncov {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidDof: return "InvalidDof";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
    case ErrorKind::TooFewObservations: return "TooFewObservations";
    case ErrorKind::NoFeasibleStart: return "NoFeasibleStart";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyRun: return "EmptyRun";
    case ErrorKind::RunAborted: return "RunAborted";
    case ErrorKind::DegenerateTable: return "DegenerateTable";
    case ErrorKind::UnsupportedK: return "UnsupportedK";
    case ErrorKind::UnsupportedAlpha: return "UnsupportedAlpha";
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::NonPositivePrice: return "NonPositivePrice";
    case ErrorKind::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace dyncov
