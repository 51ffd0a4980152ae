#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ensot {

/// Failure categories reported by every module. The CLI maps these onto exit
/// codes and the machine-readable error JSON.
enum class ErrorKind {
  kNonFiniteState,
  kNotPsd,
  kNotSymmetric,
  kSingularKkt,
  kNotControllable,
  kDimensionMismatch,
  kInvalidArgument,
  kNotNormalized,
  kZeroMass,
  kUnbalanced,
  kNoConvergence,
  kTooLarge,
  kBlowUp,
  kInfeasibleConstraint,
  kInfeasible,
  kUnbounded,
  kEmptyBin,
  kNotFound,
  kMassNotAttained,
  kNotReachable,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace ensot
