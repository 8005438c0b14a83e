#pragma once

#include <stdexcept>
#include <string>

namespace chainbell {

enum class ErrorCode {
  NotHermitian,
  TraceNotOne,
  NotPositive,
  DimensionMismatch,
  InvalidArgument,
  DegenerateCorrelation,
  NotNormalized,
  Signaling,
  NegativeProbability,
  SolverFailure,
  NumericalTrouble,
  Infeasible,
  BudgetExceeded,
  InvalidConfig,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; the code says which contract broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace chainbell
