#include "ensot/lp.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace ensot {

LinearProgram::LinearProgram(int rows)
    : rows_(rows), rhs_(Vector::Zero(rows)), labels_(rows) {
  require(rows >= 1, ErrorKind::kInvalidArgument, "LP needs at least one row");
}

int LinearProgram::add_variable(double cost, std::vector<std::pair<int, double>> entries) {
  require(std::isfinite(cost), ErrorKind::kNonFiniteState, "LP cost is not finite");
  for (const auto& [r, v] : entries) {
    require(r >= 0 && r < rows_, ErrorKind::kInvalidArgument, "LP entry row out of range");
    require(std::isfinite(v), ErrorKind::kNonFiniteState, "LP coefficient is not finite");
  }
  cost_.push_back(cost);
  columns_.push_back(std::move(entries));
  return cols() - 1;
}

void LinearProgram::set_rhs(int row, double value) {
  require(row >= 0 && row < rows_, ErrorKind::kInvalidArgument, "LP row out of range");
  rhs_(row) = value;
}

void LinearProgram::set_row_label(int row, std::string label) {
  require(row >= 0 && row < rows_, ErrorKind::kInvalidArgument, "LP row out of range");
  labels_[row] = std::move(label);
}

namespace {

// Variables 0..n-1 are structural; n + r is the artificial of row r, whose
// column is sign_r * e_r so that the starting basis is feasible.
class RevisedSimplex {
 public:
  RevisedSimplex(const LinearProgram& lp, const LpOptions& opts)
      : lp_(lp), opts_(opts), m_(lp.rows()), n_(lp.cols()) {
    sign_ = Vector::Ones(m_);
    for (int r = 0; r < m_; ++r)
      if (lp.rhs()(r) < 0) sign_(r) = -1.0;
    basis_.resize(m_);
    for (int r = 0; r < m_; ++r) basis_[r] = n_ + r;
    is_basic_.assign(n_ + m_, false);
    for (int r = 0; r < m_; ++r) is_basic_[n_ + r] = true;
    upper_.assign(n_ + m_, std::numeric_limits<double>::infinity());
    refactor();
  }

  LpSolution solve() {
    const double scale = std::max(1.0, lp_.rhs().cwiseAbs().maxCoeff());
    // Phase one: minimize the sum of artificials.
    std::vector<double> phase1(n_ + m_, 0.0);
    for (int r = 0; r < m_; ++r) phase1[n_ + r] = 1.0;
    run(phase1, /*allow_artificial=*/true);
    for (int k = 0; k < m_; ++k) {
      if (basis_[k] >= n_ && x_basic_(k) > opts_.feasibility_tol * scale) {
        const int row = basis_[k] - n_;
        const std::string& label = lp_.row_label(row);
        fail(ErrorKind::kInfeasible,
             "LP infeasible: constraint " + (label.empty() ? std::to_string(row) : label) +
                 " cannot be met (residual " + std::to_string(x_basic_(k)) + ")");
      }
    }
    for (int r = 0; r < m_; ++r) upper_[n_ + r] = 0.0;

    std::vector<double> phase2(n_ + m_, 0.0);
    for (int j = 0; j < n_; ++j) phase2[j] = lp_.cost(j);
    run(phase2, /*allow_artificial=*/false);

    LpSolution out;
    out.x = Vector::Zero(n_);
    for (int k = 0; k < m_; ++k)
      if (basis_[k] < n_) out.x(basis_[k]) = std::max(0.0, x_basic_(k));
    out.value = 0.0;
    for (int j = 0; j < n_; ++j) out.value += lp_.cost(j) * out.x(j);
    out.duals = duals(phase2);
    out.pivots = pivots_;
    return out;
  }

 private:
  Vector column(int j) const {
    Vector a = Vector::Zero(m_);
    if (j < n_) {
      for (const auto& [r, v] : lp_.column(j)) a(r) += v;
    } else {
      a(j - n_) = sign_(j - n_);
    }
    return a;
  }

  double dot_column(const Vector& y, int j) const {
    if (j >= n_) return y(j - n_) * sign_(j - n_);
    double s = 0.0;
    for (const auto& [r, v] : lp_.column(j)) s += y(r) * v;
    return s;
  }

  void refactor() {
    Matrix b(m_, m_);
    for (int k = 0; k < m_; ++k) b.col(k) = column(basis_[k]);
    Eigen::PartialPivLU<Matrix> lu(b);
    binv_ = lu.inverse();
    x_basic_ = binv_ * lp_.rhs();
    since_refactor_ = 0;
  }

  Vector duals(const std::vector<double>& cost) const {
    Vector cb(m_);
    for (int k = 0; k < m_; ++k) cb(k) = cost[basis_[k]];
    return binv_.transpose() * cb;
  }

  void run(const std::vector<double>& cost, bool allow_artificial) {
    const double cscale = [&] {
      double s = 1.0;
      for (double c : cost) s = std::max(s, std::abs(c));
      return s;
    }();
    const double pivot_tol = 1e-9;
    while (true) {
      const Vector y = duals(cost);
      // Dantzig pricing; a long run of degenerate pivots switches to Bland's
      // lowest-index rule until the objective moves again, which rules out
      // cycling.
      const bool bland = degenerate_run_ >= kBlandAfter;
      int q = -1;
      double best = -opts_.optimality_tol * cscale;
      const int limit = allow_artificial ? n_ + m_ : n_;
      for (int j = 0; j < limit; ++j) {
        if (is_basic_[j] || upper_[j] == 0.0) continue;
        const double d = cost[j] - dot_column(y, j);
        if (d < best) {
          q = j;
          if (bland) break;
          best = d;
        }
      }
      if (q < 0) return;
      if (++pivots_ > opts_.max_pivots) {
        fail(ErrorKind::kNoConvergence,
             "LP exceeded " + std::to_string(opts_.max_pivots) + " pivots");
      }
      const Vector alpha = binv_ * column(q);
      // Ratio test over both bounds of the basic variables; ties go to the
      // lowest variable index.
      int leave = -1;
      double theta = std::numeric_limits<double>::infinity();
      for (int k = 0; k < m_; ++k) {
        double ratio;
        if (alpha(k) > pivot_tol) {
          ratio = std::max(0.0, x_basic_(k)) / alpha(k);
        } else if (alpha(k) < -pivot_tol && std::isfinite(upper_[basis_[k]])) {
          ratio = std::max(0.0, upper_[basis_[k]] - x_basic_(k)) / -alpha(k);
        } else {
          continue;
        }
        if (ratio < theta || (ratio == theta && basis_[k] < basis_[leave])) {
          theta = ratio;
          leave = k;
        }
      }
      if (leave < 0) fail(ErrorKind::kUnbounded, "LP objective is unbounded below");

      degenerate_run_ = theta > 0.0 ? 0 : degenerate_run_ + 1;
      x_basic_ -= theta * alpha;
      x_basic_(leave) = theta;
      const double piv = alpha(leave);
      binv_.row(leave) /= piv;
      for (int k = 0; k < m_; ++k) {
        if (k != leave && alpha(k) != 0.0) binv_.row(k) -= alpha(k) * binv_.row(leave);
      }
      is_basic_[basis_[leave]] = false;
      basis_[leave] = q;
      is_basic_[q] = true;
      if (++since_refactor_ >= opts_.refactor_every) refactor();
    }
  }

  const LinearProgram& lp_;
  const LpOptions opts_;
  const int m_, n_;
  Vector sign_;
  std::vector<int> basis_;
  std::vector<bool> is_basic_;
  std::vector<double> upper_;
  Matrix binv_;
  Vector x_basic_;
  long pivots_ = 0;
  int since_refactor_ = 0;
  int degenerate_run_ = 0;
  static constexpr int kBlandAfter = 50;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const LpOptions& opts) {
  require_finite(lp.rhs(), "LP right-hand side");
  return RevisedSimplex(lp, opts).solve();
}

}  // namespace ensot
