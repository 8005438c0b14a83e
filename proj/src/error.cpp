#include "chainbell/error.hpp"

namespace chainbell {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::TraceNotOne: return "TraceNotOne";
    case ErrorCode::NotPositive: return "NotPositive";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateCorrelation: return "DegenerateCorrelation";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::Signaling: return "Signaling";
    case ErrorCode::NegativeProbability: return "NegativeProbability";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::NumericalTrouble: return "NumericalTrouble";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace chainbell
