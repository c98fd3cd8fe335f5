#include "trddpc/error.hpp"

namespace trddpc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnbounded: return "unbounded-in-direction";
    case ErrorCode::kInfeasibleSet: return "infeasible-set";
    case ErrorCode::kEmptySet: return "empty-set";
    case ErrorCode::kOriginNotInterior: return "origin-not-interior";
    case ErrorCode::kIndexOutOfRange: return "index-out-of-range";
    case ErrorCode::kDepthTooLarge: return "depth-too-large";
    case ErrorCode::kEmptyIntersection: return "empty-intersection";
    case ErrorCode::kNoConvergence: return "no-convergence";
    case ErrorCode::kVerticesMissing: return "vertices-missing";
    case ErrorCode::kSdpInfeasible: return "sdp-infeasible";
    case ErrorCode::kMarginNonpositive: return "margin-nonpositive";
    case ErrorCode::kNoTermination: return "no-termination";
    case ErrorCode::kTightenedSetEmpty: return "tightened-set-empty";
    case ErrorCode::kTerminalDesignInfeasible: return "terminal-design-infeasible";
    case ErrorCode::kLambdaGeOne: return "lambda-ge-one";
    case ErrorCode::kRetryCapExceeded: return "retry-cap-exceeded";
    case ErrorCode::kPersistencyOfExcitation: return "persistency-of-excitation";
    case ErrorCode::kOcpInfeasible: return "infeasible";
    case ErrorCode::kSolverFailure: return "solver-failure";
    case ErrorCode::kStepInfeasible: return "step-infeasible";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
      return 4;
    case ErrorCode::kSolverFailure:
    case ErrorCode::kNoConvergence:
    case ErrorCode::kNoTermination:
      return 3;
    default:
      return 2;
  }
}

}  // namespace trddpc
