#include "ensot/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ensot {

OdeSolution integrate_ode(const OdeRhs& rhs, const Vector& x0, double t0,
                          double t1, int steps) {
  require(steps >= 1, ErrorKind::kInvalidArgument, "integrate_ode: steps must be >= 1");
  require(t0 <= t1, ErrorKind::kInvalidArgument, "integrate_ode: t0 must not exceed t1");
  require_finite(x0, "integrate_ode initial state");

  OdeSolution sol;
  sol.times.reserve(steps + 1);
  sol.states.reserve(steps + 1);
  sol.times.push_back(t0);
  sol.states.push_back(x0);

  const double h = (t1 - t0) / steps;
  Vector x = x0;
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * h;
    x = rk4_step(rhs, t, x, h);
    if (!all_finite(x)) {
      fail(ErrorKind::kNonFiniteState,
           "integrate_ode: non-finite state at t = " + std::to_string(t + h));
    }
    sol.times.push_back(k + 1 == steps ? t1 : t0 + (k + 1) * h);
    sol.states.push_back(x);
  }
  return sol;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    fail(ErrorKind::kNonFiniteState, std::string(what) + " contains NaN or Inf");
  }
}

Matrix symmetrize(const Matrix& s) { return 0.5 * (s + s.transpose()); }

double max_asymmetry(const Matrix& s) {
  if (s.rows() != s.cols()) return INFINITY;
  return (s - s.transpose()).cwiseAbs().maxCoeff();
}

SymmetricEigen jacobi_eigen(const Matrix& s) {
  require(s.rows() == s.cols(), ErrorKind::kDimensionMismatch,
          "jacobi_eigen: matrix must be square");
  const Eigen::Index n = s.rows();
  Matrix a = symmetrize(s);
  Matrix v = Matrix::Identity(n, n);

  // A rotation is skipped once the off-diagonal entry is negligible relative
  // to its diagonal pair; this keeps small eigenvalues of graded matrices
  // accurate to working precision.
  const double scale = a.norm();
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= kEps * std::sqrt(std::abs(a(p, p) * a(q, q))) ||
            std::abs(apq) <= 1e-3 * kEps * kEps * scale) {
          continue;
        }
        rotated = true;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

Matrix psd_sqrt(const Matrix& s, double tol) {
  require(s.rows() == s.cols(), ErrorKind::kDimensionMismatch, "psd_sqrt: matrix must be square");
  require_finite(s, "psd_sqrt input");
  if (max_asymmetry(s) > 1e-10) {
    fail(ErrorKind::kNotSymmetric, "psd_sqrt: asymmetry exceeds 1e-10");
  }
  if (s.size() == 0) return s;
  const SymmetricEigen eig = jacobi_eigen(s);
  if (eig.values(0) < -tol) {
    fail(ErrorKind::kNotPsd,
         "psd_sqrt: eigenvalue " + std::to_string(eig.values(0)) + " below tolerance");
  }
  const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
  return symmetrize(eig.vectors * root.asDiagonal() * eig.vectors.transpose());
}

namespace {

SymmetricEigen checked_pd_eigen(const Matrix& s, double rel_floor, const char* who) {
  require(s.rows() == s.cols(), ErrorKind::kDimensionMismatch,
          std::string(who) + ": matrix must be square");
  require_finite(s, who);
  const SymmetricEigen eig = jacobi_eigen(s);
  const double largest = eig.values(eig.values.size() - 1);
  if (!(largest > 0.0) || eig.values(0) <= rel_floor * largest) {
    fail(ErrorKind::kNotPsd, std::string(who) + ": matrix is not positive definite");
  }
  return eig;
}

}  // namespace

Matrix pd_inv_sqrt(const Matrix& s, double rel_floor) {
  const SymmetricEigen eig = checked_pd_eigen(s, rel_floor, "pd_inv_sqrt");
  const Vector d = eig.values.cwiseSqrt().cwiseInverse();
  return symmetrize(eig.vectors * d.asDiagonal() * eig.vectors.transpose());
}

Matrix pd_inverse(const Matrix& s, double rel_floor) {
  const SymmetricEigen eig = checked_pd_eigen(s, rel_floor, "pd_inverse");
  const Vector d = eig.values.cwiseInverse();
  return symmetrize(eig.vectors * d.asDiagonal() * eig.vectors.transpose());
}

Elimination eliminate(const Matrix& m, double rel_tol) {
  Elimination out;
  out.reduced = m;
  out.max_abs = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  if (out.max_abs == 0.0) return out;
  const double threshold = rel_tol * out.max_abs;

  Matrix& r = out.reduced;
  std::vector<bool> used(cols, false);
  for (Eigen::Index row = 0; row < rows; ++row) {
    double best = 0.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (used[j]) continue;
      for (Eigen::Index i = row; i < rows; ++i) {
        if (std::abs(r(i, j)) > best) {
          best = std::abs(r(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0 || best <= threshold) break;
    r.row(row).swap(r.row(bi));
    r.row(row) /= r(row, bj);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i != row && r(i, bj) != 0.0) r.row(i) -= r(i, bj) * r.row(row);
    }
    used[bj] = true;
    out.pivot_columns.push_back(static_cast<int>(bj));
    ++out.rank;
  }
  // Rows below the rank carry only sub-threshold residue.
  for (Eigen::Index i = out.rank; i < rows; ++i) r.row(i).setZero();
  return out;
}

int matrix_rank(const Matrix& m, double rel_tol) { return eliminate(m, rel_tol).rank; }

Matrix null_space(const Matrix& m, double rel_tol) {
  const Elimination e = eliminate(m, rel_tol);
  const Eigen::Index cols = m.cols();
  std::vector<bool> is_pivot(cols, false);
  for (int c : e.pivot_columns) is_pivot[c] = true;
  std::vector<Eigen::Index> free_cols;
  for (Eigen::Index j = 0; j < cols; ++j)
    if (!is_pivot[j]) free_cols.push_back(j);
  Matrix basis(cols, static_cast<Eigen::Index>(free_cols.size()));
  for (size_t k = 0; k < free_cols.size(); ++k) {
    Vector v = Vector::Zero(cols);
    v(free_cols[k]) = 1.0;
    for (int r = 0; r < e.rank; ++r) v(e.pivot_columns[r]) = -e.reduced(r, free_cols[k]);
    basis.col(static_cast<Eigen::Index>(k)) = v;
  }
  if (basis.cols() == 0) return basis;
  Eigen::HouseholderQR<Matrix> qr(basis);
  return qr.householderQ() * Matrix::Identity(cols, basis.cols());
}

Matrix solve_square(const Matrix& m, const Matrix& rhs, double rel_pivot) {
  require(m.rows() == m.cols() && rhs.rows() == m.rows(), ErrorKind::kDimensionMismatch,
          "solve_square: dimension mismatch");
  const Eigen::Index n = m.rows();
  Matrix a = m;
  Matrix b = rhs;
  std::vector<Eigen::Index> col_perm(n);
  std::iota(col_perm.begin(), col_perm.end(), 0);
  const double scale = n ? a.cwiseAbs().maxCoeff() : 0.0;
  const double threshold = rel_pivot * scale;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index bi = k, bj = k;
    double best = -1.0;
    for (Eigen::Index j = k; j < n; ++j)
      for (Eigen::Index i = k; i < n; ++i)
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          bi = i;
          bj = j;
        }
    if (!(best > threshold)) {
      fail(ErrorKind::kSingularKkt,
           "linear system is numerically singular (pivot " + std::to_string(best) + ")");
    }
    a.row(k).swap(a.row(bi));
    b.row(k).swap(b.row(bi));
    a.col(k).swap(a.col(bj));
    std::swap(col_perm[k], col_perm[bj]);
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
      b.row(i) -= f * b.row(k);
    }
  }
  Matrix y(n, b.cols());
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    Eigen::RowVectorXd acc = b.row(k);
    for (Eigen::Index j = k + 1; j < n; ++j) acc -= a(k, j) * y.row(j);
    y.row(k) = acc / a(k, k);
  }
  Matrix x(n, b.cols());
  for (Eigen::Index k = 0; k < n; ++k) x.row(col_perm[k]) = y.row(k);
  return x;
}

Vector solve_equality_qp(const Matrix& q_mat, const Vector& q, const Matrix& a_eq,
                         const Vector& b_eq) {
  const Eigen::Index n = q_mat.rows();
  const Eigen::Index m = a_eq.rows();
  require(q_mat.cols() == n && q.size() == n && a_eq.cols() == n && b_eq.size() == m,
          ErrorKind::kDimensionMismatch, "solve_equality_qp: dimension mismatch");
  Matrix kkt = Matrix::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = q_mat;
  kkt.topRightCorner(n, m) = a_eq.transpose();
  kkt.bottomLeftCorner(m, n) = a_eq;
  Vector rhs(n + m);
  rhs << -q, b_eq;
  const Matrix sol = solve_square(kkt, rhs, 1e-12);
  return sol.col(0).head(n);
}

}  // namespace ensot
