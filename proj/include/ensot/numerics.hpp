#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "ensot/error.hpp"

namespace ensot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense trajectory sampled on a uniform grid.
struct OdeSolution {
  std::vector<double> times;
  std::vector<Vector> states;
};

using OdeRhs = std::function<Vector(double, const Vector&)>;

/// Classic fourth-order Runge-Kutta step. Works for any Eigen dense type and
/// for negative step sizes.
template <class State, class Rhs>
State rk4_step(Rhs&& rhs, double t, const State& x, double h) {
  const State k1 = rhs(t, x);
  const State k2 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k1));
  const State k3 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k2));
  const State k4 = rhs(t + h, State(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Fixed-step RK4 on [t0, t1] with `steps` uniform steps.
/// Throws kNonFiniteState as soon as a state leaves the finite reals.
OdeSolution integrate_ode(const OdeRhs& rhs, const Vector& x0, double t0,
                          double t1, int steps);

bool all_finite(const Matrix& m);
void require_finite(const Matrix& m, const char* what);

Matrix symmetrize(const Matrix& s);
double max_asymmetry(const Matrix& s);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are sorted ascending; eigenvectors are the matching columns.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};
SymmetricEigen jacobi_eigen(const Matrix& s);

/// Symmetric PSD square root. Eigenvalues in [-tol, 0) are clamped to zero.
/// Throws kNotSymmetric when max |S - S^T| > 1e-10 and kNotPsd when an
/// eigenvalue is below -tol.
Matrix psd_sqrt(const Matrix& s, double tol = 1e-10);

/// Inverse square root of a positive definite matrix through the same
/// eigenbasis as psd_sqrt. Throws kNotPsd when the smallest eigenvalue is not
/// above `rel_floor` times the largest.
Matrix pd_inv_sqrt(const Matrix& s, double rel_floor = 1e-12);

/// Inverse of a symmetric positive definite matrix through its eigenbasis.
Matrix pd_inverse(const Matrix& s, double rel_floor = 1e-12);

/// Gaussian elimination with complete pivoting. Returns the row echelon data
/// used for rank, null space and linear solves.
struct Elimination {
  int rank = 0;
  double max_abs = 0.0;
  std::vector<int> pivot_columns;  // in original column numbering
  Matrix reduced;                  // reduced row echelon form (rows x cols)
};
Elimination eliminate(const Matrix& m, double rel_tol);

int matrix_rank(const Matrix& m, double rel_tol = 1e-10);

/// Orthonormal basis of ker(m) as columns (empty matrix with m.cols() rows
/// when the kernel is trivial).
Matrix null_space(const Matrix& m, double rel_tol = 1e-10);

/// Solves the square system m x = rhs with complete pivoting. Throws
/// kSingularKkt when a pivot falls below `rel_pivot` times max |m|.
Matrix solve_square(const Matrix& m, const Matrix& rhs, double rel_pivot);

/// argmin 1/2 x'Qx + q'x subject to Aeq x = beq via the KKT system.
Vector solve_equality_qp(const Matrix& q_mat, const Vector& q, const Matrix& a_eq,
                         const Vector& b_eq);

}  // namespace ensot
