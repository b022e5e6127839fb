#include "scsb/error.hpp"

namespace scsb {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::GridMismatch: return "grid-mismatch";
    case ErrorCode::GridTooNarrow: return "grid-too-narrow";
    case ErrorCode::InterpolationRefused: return "interpolation-refused";
    case ErrorCode::Truncation: return "truncation";
    case ErrorCode::RatioUnbounded: return "ratio-unbounded";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::Support: return "support";
    case ErrorCode::Infeasible: return "infeasible-target";
    case ErrorCode::Stall: return "stall";
    case ErrorCode::NonConvergence: return "non-convergence";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::TruncationMismatch: return "truncation-mismatch";
    case ErrorCode::FitDegenerate: return "fit-degenerate";
    case ErrorCode::Nondifferentiable: return "nondifferentiable";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

}  // namespace scsb
