#pragma once

#include <string>
#include <vector>

#include "ensot/numerics.hpp"

namespace ensot {

/// min c'x subject to A x = b, x >= 0, with A stored by sparse columns.
class LinearProgram {
 public:
  explicit LinearProgram(int rows);

  /// Appends a variable; returns its index.
  int add_variable(double cost, std::vector<std::pair<int, double>> entries);
  void set_rhs(int row, double value);
  /// Optional names used in infeasibility reports.
  void set_row_label(int row, std::string label);

  int rows() const { return rows_; }
  int cols() const { return static_cast<int>(cost_.size()); }
  double cost(int j) const { return cost_[j]; }
  const std::vector<std::pair<int, double>>& column(int j) const { return columns_[j]; }
  const Vector& rhs() const { return rhs_; }
  const std::string& row_label(int row) const { return labels_[row]; }

 private:
  int rows_;
  std::vector<double> cost_;
  std::vector<std::vector<std::pair<int, double>>> columns_;
  Vector rhs_;
  std::vector<std::string> labels_;
};

struct LpOptions {
  long max_pivots = 1000000;
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-11;
  int refactor_every = 100;
};

struct LpSolution {
  Vector x;
  double value = 0.0;
  Vector duals;  // y with c - A'y >= 0 at optimality
  long pivots = 0;
};

/// Two-phase revised simplex with Dantzig pricing that falls back to Bland's
/// rule on degenerate runs. Artificial variables that stay basic after phase
/// one are bounded to [0, 0], so redundant equality rows are tolerated. Throws kInfeasible (naming
/// the first unsatisfied row), kUnbounded or kNoConvergence.
LpSolution solve_lp(const LinearProgram& lp, const LpOptions& opts = {});

}  // namespace ensot
