#pragma once

#include <stdexcept>
#include <string>

namespace trddpc {

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidArgument,
  kUnbounded,
  kInfeasibleSet,
  kEmptySet,
  kOriginNotInterior,
  kIndexOutOfRange,
  kDepthTooLarge,
  kEmptyIntersection,
  kNoConvergence,
  kVerticesMissing,
  kSdpInfeasible,
  kMarginNonpositive,
  kNoTermination,
  kTightenedSetEmpty,
  kTerminalDesignInfeasible,
  kLambdaGeOne,
  kRetryCapExceeded,
  kPersistencyOfExcitation,
  kOcpInfeasible,
  kSolverFailure,
  kStepInfeasible,
  kIo,
};

const char* to_string(ErrorCode code);

/// Process exit code for the CLI: 2 assumption failure, 3 solver failure, 4 io.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trddpc
