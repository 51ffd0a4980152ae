#include "ensot/error.hpp"

namespace ensot {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFiniteState: return "NonFiniteState";
    case ErrorKind::kNotPsd: return "NotPsd";
    case ErrorKind::kNotSymmetric: return "NotSymmetric";
    case ErrorKind::kSingularKkt: return "SingularKkt";
    case ErrorKind::kNotControllable: return "NotControllable";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNotNormalized: return "NotNormalized";
    case ErrorKind::kZeroMass: return "ZeroMass";
    case ErrorKind::kUnbalanced: return "Unbalanced";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kTooLarge: return "TooLarge";
    case ErrorKind::kBlowUp: return "BlowUp";
    case ErrorKind::kInfeasibleConstraint: return "InfeasibleConstraint";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kUnbounded: return "Unbounded";
    case ErrorKind::kEmptyBin: return "EmptyBin";
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kMassNotAttained: return "MassNotAttained";
    case ErrorKind::kNotReachable: return "NotReachable";
    case ErrorKind::kConfig: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace ensot
