#pragma once

// Independent reference computations shared by the tests. Nothing here calls
// the library's own integrators or eigen-solvers.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace ensot::testing {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Scaling and squaring of a truncated Taylor series.
inline Matrix expm_reference(const Matrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::pow(2.0, squarings) > 0.25) ++squarings;
  const Matrix scaled = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = term * scaled / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

// int_0^T e^{As} B B' e^{A's} ds from one block exponential.
inline Matrix van_loan_gramian(const Matrix& a, const Matrix& b, double span) {
  const int n = a.rows();
  Matrix m = Matrix::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = -a;
  m.topRightCorner(n, n) = b * b.transpose();
  m.bottomRightCorner(n, n) = a.transpose();
  const Matrix f = expm_reference(m * span);
  return f.bottomRightCorner(n, n).transpose() * f.topRightCorner(n, n);
}

inline Matrix sqrtm_spd(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

inline Matrix random_spd(std::mt19937* rng, int n, double floor = 0.2) {
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (int k = 0; k < g.size(); ++k) g(k) = normal(*rng);
  return g * g.transpose() / n + floor * Matrix::Identity(n, n);
}

inline Matrix random_matrix(std::mt19937* rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (int k = 0; k < m.size(); ++k) m(k) = normal(*rng);
  return m;
}

// Displacement interpolation between Gaussians for a constant pair (A, B) on
// [0, 1], assembled from the optimal affine map in the transformed
// coordinates and the open-loop minimum-energy trajectory.
struct GaussianPathOracle {
  Matrix a, b, s0, s1;
  Vector m0, m1;

  Matrix phi(double t, double s) const { return expm_reference(a * (t - s)); }
  // Gramian with evaluation point t over [0, t].
  Matrix w_end(double t) const { return van_loan_gramian(a, b, t); }

  // x(t) = M(t) x0 + N(t) x1 along the minimum-energy path.
  std::pair<Matrix, Matrix> path(double t) const {
    const Matrix w1_inv = w_end(1.0).inverse();
    const Matrix n_t = t == 0.0 ? Matrix::Zero(a.rows(), a.rows())
                                : Matrix(w_end(t) * phi(1, t).transpose() * w1_inv);
    return {phi(t, 0) - n_t * phi(1, 0), n_t};
  }

  Matrix transport_map() const {
    const Matrix l = sqrtm_spd(w_end(1.0)).inverse();
    const Matrix h0 = l * phi(1, 0) * s0 * phi(1, 0).transpose() * l;
    const Matrix h1 = l * s1 * l;
    const Matrix r0 = sqrtm_spd(h0), r0i = r0.inverse();
    const Matrix t_hat = r0i * sqrtm_spd(r0 * h1 * r0) * r0i;
    return l.inverse() * t_hat * l * phi(1, 0);
  }

  Matrix covariance(double t) const {
    const auto [m, n] = path(t);
    const Matrix f = m + n * transport_map();
    return f * s0 * f.transpose();
  }

  Vector mean(double t) const {
    const auto [m, n] = path(t);
    return m * m0 + n * m1;
  }
};

}  // namespace ensot::testing
