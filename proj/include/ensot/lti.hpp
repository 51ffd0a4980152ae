#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ensot/numerics.hpp"

namespace ensot {

/// Grid density for every fixed-step integration over a linear system.
/// Each segment between breakpoints gets an even number of RK4 steps (at least
/// two) so that Simpson quadrature can run on the same nodes.
struct IntegrationOptions {
  int steps_per_unit = 1000;
};

/// A matrix-valued function of time: a constant, a piecewise-constant table
/// (value i holds on [times[i], times[i+1]), the right limit is taken at a
/// breakpoint), or an arbitrary smooth callable.
class MatrixFunction {
 public:
  MatrixFunction();
  MatrixFunction(Matrix constant);  // NOLINT(google-explicit-constructor)
  template <class Derived>
  MatrixFunction(const Eigen::MatrixBase<Derived>& constant)  // NOLINT
      : MatrixFunction(Matrix(constant)) {}

  static MatrixFunction piecewise(std::vector<double> times, std::vector<Matrix> values);
  static MatrixFunction callable(Eigen::Index rows, Eigen::Index cols,
                                 std::function<Matrix(double)> fn);

  Matrix operator()(double t) const;

  /// Value used inside an integration step [lo, hi] that does not straddle a
  /// breakpoint: tables are read at the step midpoint so the piece is stable.
  Matrix on_step(double t, double lo, double hi) const;

  /// Interior breakpoints (where a table switches value).
  std::vector<double> breakpoints() const;

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  bool is_constant() const;

  MatrixFunction shifted(double offset) const;

 private:
  struct Impl;
  explicit MatrixFunction(std::shared_ptr<const Impl> impl, double offset);
  std::shared_ptr<const Impl> impl_;
  double offset_ = 0.0;
};

/// x' = A(t) x + B(t) u, y = C(t) x. Immutable once constructed.
class LinearSystem {
 public:
  LinearSystem(MatrixFunction a, MatrixFunction b, MatrixFunction c);
  /// Full-state output (C = I).
  LinearSystem(MatrixFunction a, MatrixFunction b);

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  int output_dim() const { return p_; }

  Matrix A(double t) const { return a_(t); }
  Matrix B(double t) const { return b_(t); }
  Matrix C(double t) const { return c_(t); }
  Matrix A(double t, double lo, double hi) const { return a_.on_step(t, lo, hi); }
  Matrix B(double t, double lo, double hi) const { return b_.on_step(t, lo, hi); }
  Matrix C(double t, double lo, double hi) const { return c_.on_step(t, lo, hi); }

  const MatrixFunction& a_function() const { return a_; }
  const MatrixFunction& b_function() const { return b_; }
  const MatrixFunction& c_function() const { return c_; }

  /// Sorted breakpoints of A, B, C strictly inside (min(a,b), max(a,b)).
  std::vector<double> breakpoints_between(double a, double b) const;

  /// System with time origin moved: shifted(k).A(t) == A(t + k).
  LinearSystem shifted(double offset) const;

 private:
  MatrixFunction a_, b_, c_;
  int n_ = 0, m_ = 0, p_ = 0;
};

/// Integration nodes from `from` to `to` (either direction), including every
/// breakpoint in between; each segment has an even step count.
std::vector<double> integration_grid(const LinearSystem& sys, double from, double to,
                                     const IntegrationOptions& opts = {});

/// Phi(t, t'): transition matrix from t' to t.
Matrix state_transition(const LinearSystem& sys, double t, double t_prime,
                        const IntegrationOptions& opts = {});

/// Controllability Gramian with evaluation point t, integrated over
/// [min(t,t'), max(t,t')] of Phi(t,s) B(s) B(s)' Phi(t,s)' ds. Always PSD.
Matrix controllability_gramian(const LinearSystem& sys, double t, double t_prime,
                               const IntegrationOptions& opts = {});

/// Observability Gramian M(t0,t1) = int_{t0}^{t1} Phi(s,t0)' C' C Phi(s,t0) ds.
Matrix observability_gramian(const LinearSystem& sys, double t0, double t1,
                             const IntegrationOptions& opts = {});

/// W^{-1} for a controllability Gramian; kNotControllable when the smallest
/// eigenvalue is below 1e-12 times the largest.
Matrix gramian_inverse(const Matrix& w);
/// W^{-1/2} under the same singularity policy.
Matrix gramian_inv_sqrt(const Matrix& w);

/// (x1 - Phi(t1,t0) x0)' W(t1,t0)^{-1} (x1 - Phi(t1,t0) x0).
double min_energy_cost(const LinearSystem& sys, const Vector& x0, const Vector& x1,
                       double t0, double t1, const IntegrationOptions& opts = {});

/// Target-independent part of the minimum-energy feedback on [t0, t1].
///
/// With Psi(t) = Phi(t1, t) and R(t) the Gramian with evaluation point t1 over
/// [t, t1], the optimal law is u(t, x) = B' Psi' R^{-1} (x1 - Psi x). Psi and R
/// are tabulated by one backward RK4 pass; off-node times take a partial step
/// from the nearest later node.
class MinEnergyGains {
 public:
  MinEnergyGains(const LinearSystem& sys, double t0, double t1,
                 const IntegrationOptions& opts = {});

  /// u = feedforward * x1 - feedback * x
  struct Gains {
    Matrix feedback;     // m x n
    Matrix feedforward;  // m x n
  };
  Gains at(double t) const;
  /// Same, with B taken from the piece of a table that covers [lo, hi].
  Gains at(double t, double lo, double hi) const;

  /// Psi = Phi(t1, t) and R = Gramian over [t, t1] with evaluation point t1.
  struct Propagator {
    Matrix psi;
    Matrix r;
  };
  Propagator propagator(double t) const;

  const LinearSystem& system() const { return sys_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  /// Nodes of the simulation grid (half the tabulation density).
  const std::vector<double>& simulation_grid() const { return sim_grid_; }

 private:
  LinearSystem sys_;
  double t0_, t1_;
  std::vector<double> nodes_;
  std::vector<Matrix> table_;  // [Psi | R] per node, ascending time
  std::vector<double> sim_grid_;
};

/// Minimum-energy feedback law steering to x1 at t1. Evaluation at t >= t1 is
/// rejected because W(t, t1) is singular there.
class FeedbackLaw {
 public:
  FeedbackLaw(std::shared_ptr<const MinEnergyGains> gains, Vector x1);

  Vector operator()(double t, const Vector& x) const;

  const Vector& target() const { return x1_; }
  double t0() const { return gains_->t0(); }
  double t1() const { return gains_->t1(); }
  const MinEnergyGains& gains() const { return *gains_; }

 private:
  std::shared_ptr<const MinEnergyGains> gains_;
  Vector x1_;
};

FeedbackLaw min_energy_control(const LinearSystem& sys, const Vector& x0, const Vector& x1,
                               double t0, double t1, const IntegrationOptions& opts = {});

struct ClosedLoopTrajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> controls;
  double energy = 0.0;  // int |u|^2 dt
};

/// RK4 simulation of x' = A x + B u(t, x) from (x0, t0) to t1. Steps follow
/// the integration grid and shrink geometrically towards t1, where the
/// closed-loop gain blows up.
ClosedLoopTrajectory simulate_closed_loop(const FeedbackLaw& law, const Vector& x0);

/// Linear flow of the closed loop: x(t) = P(t) x0 + Q(t) x1 for every start x0
/// and target x1. Returns [P | Q] (n x 2n). t must lie in [t0, t1].
Matrix closed_loop_flow(const MinEnergyGains& gains, double t);

/// Expected minimum energy between jointly Gaussian endpoints:
/// Tr(W^{-1}(S0+m0m0') - 2 Phi' W^{-1}(S01+m0m1') + Phi' W^{-1} Phi (S1+m1m1'))
/// with W = W(t0,t1), Phi = Phi(t0,t1).
double expected_min_energy_gaussian(const LinearSystem& sys, const Vector& m0,
                                    const Matrix& s0, const Vector& m1, const Matrix& s1,
                                    const Matrix& s01, double t0, double t1,
                                    const IntegrationOptions& opts = {});

/// [C; CA; ...; CA^{n-1}]
Matrix observability_matrix(const Matrix& a, const Matrix& c);

/// Kalman rank test with relative pivot threshold 1e-10.
bool is_observable_pair(const Matrix& a, const Matrix& c);

}  // namespace ensot
