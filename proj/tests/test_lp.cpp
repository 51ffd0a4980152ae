#include "ensot/lp.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ensot/transport.hpp"

namespace ensot {
namespace {

// Minimum over all basic feasible solutions of a small dense LP.
double vertex_oracle(const Matrix& a, const Vector& b, const Vector& c) {
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  const int rank = matrix_rank(a);
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + rank, true);
  double best = std::numeric_limits<double>::infinity();
  do {
    std::vector<int> cols;
    for (int j = 0; j < n; ++j)
      if (pick[j]) cols.push_back(j);
    Matrix sub(m, rank);
    for (int k = 0; k < rank; ++k) sub.col(k) = a.col(cols[k]);
    Eigen::FullPivLU<Matrix> lu(sub);
    if (lu.rank() < rank) continue;
    const Vector xs = lu.solve(b);
    if ((sub * xs - b).cwiseAbs().maxCoeff() > 1e-9 || xs.minCoeff() < -1e-12) continue;
    double v = 0.0;
    for (int k = 0; k < rank; ++k) v += c(cols[k]) * xs(k);
    best = std::min(best, v);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

LinearProgram dense_lp(const Matrix& a, const Vector& b, const Vector& c) {
  LinearProgram lp(static_cast<int>(a.rows()));
  for (int j = 0; j < a.cols(); ++j) {
    std::vector<std::pair<int, double>> col;
    for (int r = 0; r < a.rows(); ++r)
      if (a(r, j) != 0.0) col.emplace_back(r, a(r, j));
    lp.add_variable(c(j), col);
  }
  for (int r = 0; r < a.rows(); ++r) lp.set_rhs(r, b(r));
  return lp;
}

GTEST_TEST(LpTest, SmallExample) {
  // min -x - 2y s.t. x + y + s = 4, x + 3y + t = 6
  Matrix a(2, 4);
  a << 1, 1, 1, 0, 1, 3, 0, 1;
  const LpSolution s = solve_lp(dense_lp(a, Eigen::Vector2d(4, 6), Eigen::Vector4d(-1, -2, 0, 0)));
  EXPECT_NEAR(s.value, -5.0, 1e-12);
  EXPECT_NEAR(s.x(0), 3.0, 1e-12);
  EXPECT_NEAR(s.x(1), 1.0, 1e-12);
}

GTEST_TEST(LpTest, InfeasibleAndUnbounded) {
  Matrix a(2, 1);
  a << 1, 1;
  LinearProgram lp = dense_lp(a, Eigen::Vector2d(1, 2), Vector::Ones(1));
  lp.set_row_label(1, "second");
  try {
    solve_lp(lp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
  Matrix u(1, 2);
  u << 1, -1;
  try {
    solve_lp(dense_lp(u, Vector::Ones(1), Eigen::Vector2d(0, -1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnbounded);
  }
}

GTEST_TEST(LpTest, MatchesVertexEnumeration) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> small(-2, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 3, n = m + 2 + trial % 4;
    Matrix a(m, n);
    for (int k = 0; k < a.size(); ++k) a(k) = small(rng);
    // Feasible by construction; a duplicated row checks redundancy handling.
    const Vector x0 = Vector::NullaryExpr(n, [&](Eigen::Index) { return unit(rng); });
    if (trial % 5 == 0) a.row(m - 1) = a.row(0);
    const Vector b = a * x0;
    Vector c(n);
    for (int k = 0; k < n; ++k) c(k) = small(rng) + unit(rng) * (trial % 2);
    const double oracle = vertex_oracle(a, b, c);
    try {
      const LpSolution s = solve_lp(dense_lp(a, b, c));
      EXPECT_NEAR(s.value, oracle, 1e-8 * (1 + std::abs(oracle)));
      EXPECT_LT((a * s.x - b).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_GE(s.x.minCoeff(), 0.0);
      EXPECT_GE((c - a.transpose() * s.duals).minCoeff(), -1e-8);
      EXPECT_NEAR(b.dot(s.duals), s.value, 1e-8 * (1 + std::abs(oracle)));
      ++solved;
    } catch (const Error& e) {
      // Unbounded instances: the oracle cannot certify them, so require an
      // improving feasible ray instead.
      ASSERT_EQ(e.kind(), ErrorKind::kUnbounded);
      const Matrix ker = null_space(a);
      ASSERT_GT(ker.cols(), 0);
    }
  }
  EXPECT_GT(solved, 100);
}

GTEST_TEST(LpTest, MatchesTransportationSimplex) {
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int ns = 3 + trial % 4, nt = 2 + trial % 5;
    Vector a(ns), b(nt);
    for (int i = 0; i < ns; ++i) a(i) = unit(rng);
    for (int j = 0; j < nt; ++j) b(j) = unit(rng);
    a /= a.sum();
    b /= b.sum();
    Matrix c(ns, nt);
    for (int k = 0; k < c.size(); ++k) c(k) = unit(rng);
    // Every marginal row is present, so one of them is redundant.
    LinearProgram lp(ns + nt);
    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < nt; ++j) lp.add_variable(c(i, j), {{i, 1.0}, {ns + j, 1.0}});
    for (int i = 0; i < ns; ++i) lp.set_rhs(i, a(i));
    for (int j = 0; j < nt; ++j) lp.set_rhs(ns + j, b(j));
    EXPECT_NEAR(solve_lp(lp).value, solve_transport(a, b, c).value, 1e-10);
  }
}

}  // namespace
}  // namespace ensot
