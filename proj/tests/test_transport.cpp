#include "ensot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace ensot {
namespace {

Matrix row(std::initializer_list<double> xs) {
  Matrix m(1, xs.size());
  int k = 0;
  for (double x : xs) m(0, k++) = x;
  return m;
}

DiscreteMeasure random_measure(std::mt19937* rng, int dim, int atoms) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  Matrix z(dim, atoms);
  Vector w(atoms);
  for (int k = 0; k < z.size(); ++k) z(k) = normal(*rng);
  for (int k = 0; k < atoms; ++k) w(k) = unit(*rng);
  return DiscreteMeasure::from_unnormalized(z, w);
}

// W_p^p on the line by walking both quantile functions.
double quantile_cost_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p) {
  auto sorted = [](const DiscreteMeasure& m) {
    std::vector<std::pair<double, double>> v;
    for (int i = 0; i < m.size(); ++i) v.emplace_back(m.atom(i)(0), m.weight(i));
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted(mu), b = sorted(nu);
  size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double m = std::min(ra, rb);
    total += m * std::pow(std::abs(a[i].first - b[j].first), p);
    ra -= m;
    rb -= m;
    if (ra <= 1e-15 && i + 1 < a.size()) ra = a[++i].second; else if (ra <= 1e-15) ++i;
    if (rb <= 1e-15 && j + 1 < b.size()) rb = b[++j].second; else if (rb <= 1e-15) ++j;
  }
  return total;
}

void expect_feasible(const TransportResult& r, const Vector& a, const Vector& b) {
  EXPECT_LT((r.plan.rowwise().sum() - a).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GE(r.plan.minCoeff(), -1e-12);
}

GTEST_TEST(KantorovichTest, PointMasses) {
  const DiscreteMeasure a = DiscreteMeasure::dirac(Vector::Constant(1, 0.0));
  const DiscreteMeasure b = DiscreteMeasure::dirac(Vector::Constant(1, 3.0));
  const TransportResult r = solve_kantorovich(a, b, Matrix::Constant(1, 1, 4.5));
  EXPECT_EQ(r.plan(0, 0), 1.0);
  EXPECT_EQ(r.value, 4.5);
  EXPECT_DOUBLE_EQ(wasserstein_p(a, b, 2.0), 3.0);
}

GTEST_TEST(KantorovichTest, IdentityCoupling) {
  std::mt19937 rng(1);
  const DiscreteMeasure mu = random_measure(&rng, 2, 7);
  const TransportResult r = solve_kantorovich(mu, mu, distance_cost(mu.atoms(), mu.atoms(), 2));
  EXPECT_NEAR(r.value, 0.0, 1e-14);
  EXPECT_LT((Matrix(r.plan) - Matrix(mu.weights().asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(wasserstein_p(mu, mu, 1.0), 0.0);
}

GTEST_TEST(KantorovichTest, Errors) {
  try {
    solve_transport(Vector::Constant(2, 0.5), Vector::Constant(2, 0.6), Matrix::Ones(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnbalanced);
  }
  const DiscreteMeasure mu = DiscreteMeasure::uniform(row({0, 1}));
  EXPECT_THROW(solve_kantorovich(mu, mu, Matrix::Ones(3, 2)), Error);
  const DiscreteMeasure big = DiscreteMeasure::from_unnormalized(
      row({0, 1, 2, 3, 4}), Eigen::Vector<double, 5>(1, 2, 3, 4, 5));
  try {
    brute_force_ot(big, big, Matrix::Ones(5, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLarge);
  }
}

GTEST_TEST(BruteForceTest, Examples) {
  const DiscreteMeasure one = DiscreteMeasure::dirac(Vector::Zero(1));
  EXPECT_EQ(brute_force_ot(one, one, Matrix::Constant(1, 1, 2.5)), 2.5);
  const DiscreteMeasure two = DiscreteMeasure::uniform(row({0, 1}));
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  EXPECT_EQ(brute_force_ot(two, two, c), 0.0);
}

GTEST_TEST(KantorovichTest, MatchesPermutationsOnUniform) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      const DiscreteMeasure mu = DiscreteMeasure::uniform(Matrix::Random(1, n));
      const DiscreteMeasure nu = DiscreteMeasure::uniform(Matrix::Random(1, n));
      Matrix c(n, n);
      for (int k = 0; k < c.size(); ++k) c(k) = unit(rng);
      ASSERT_EQ(mu.size(), n);
      const TransportResult r = solve_kantorovich(mu, nu, c);
      EXPECT_NEAR(r.value, brute_force_ot(mu, nu, c), 1e-10);
      expect_feasible(r, mu.weights(), nu.weights());
    }
  }
}

GTEST_TEST(KantorovichTest, MatchesVertexEnumeration) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> size(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const DiscreteMeasure mu = random_measure(&rng, 1, size(rng));
    const DiscreteMeasure nu = random_measure(&rng, 1, size(rng));
    Matrix c(mu.size(), nu.size());
    // Integer costs create many ties and degenerate vertices.
    for (int k = 0; k < c.size(); ++k) c(k) = trial % 2 ? unit(rng) : std::floor(3 * unit(rng));
    const TransportResult r = solve_kantorovich(mu, nu, c);
    EXPECT_NEAR(r.value, brute_force_ot(mu, nu, c), 1e-10);
    expect_feasible(r, mu.weights(), nu.weights());
  }
}

GTEST_TEST(KantorovichTest, DualCertificate) {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const DiscreteMeasure mu = random_measure(&rng, 2, 5 + trial);
    const DiscreteMeasure nu = random_measure(&rng, 2, 9 + trial / 2);
    const Matrix c = distance_cost(mu.atoms(), nu.atoms(), 1.0);
    const TransportResult r = solve_kantorovich(mu, nu, c);
    const Matrix reduced = c - r.u.replicate(1, c.cols()) - r.v.transpose().replicate(c.rows(), 1);
    EXPECT_GE(reduced.minCoeff(), -1e-10);
    EXPECT_NEAR(r.u.dot(mu.weights()) + r.v.dot(nu.weights()), r.value, 1e-8);
    EXPECT_LT((reduced.array() * r.plan.array()).abs().maxCoeff(), 1e-10);
    expect_feasible(r, mu.weights(), nu.weights());
  }
}

GTEST_TEST(KantorovichTest, LargeBlockPricing) {
  std::mt19937 rng(5);
  const DiscreteMeasure mu = random_measure(&rng, 1, 300);
  const DiscreteMeasure nu = random_measure(&rng, 1, 250);
  for (double p : {1.0, 2.0}) {
    const TransportResult r = solve_kantorovich(mu, nu, distance_cost(mu.atoms(), nu.atoms(), p));
    EXPECT_NEAR(r.value, quantile_cost_1d(mu, nu, p), 1e-10);
    expect_feasible(r, mu.weights(), nu.weights());
  }
}

GTEST_TEST(WassersteinTest, Examples) {
  EXPECT_NEAR(wasserstein_p(DiscreteMeasure::uniform(row({0, 1})),
                            DiscreteMeasure::uniform(row({1, 2})), 1.0),
              1.0, 1e-12);
}

GTEST_TEST(WassersteinTest, OneDimensionalQuantiles) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const DiscreteMeasure mu = random_measure(&rng, 1, 1 + trial % 9);
    const DiscreteMeasure nu = random_measure(&rng, 1, 1 + trial % 7);
    for (double p : {1.0, 1.5, 2.0, 3.0}) {
      EXPECT_NEAR(wasserstein_p(mu, nu, p), std::pow(quantile_cost_1d(mu, nu, p), 1.0 / p), 1e-9);
    }
  }
}

GTEST_TEST(WassersteinTest, MetricAxioms) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const DiscreteMeasure a = random_measure(&rng, 2, 3 + trial % 5);
    const DiscreteMeasure b = random_measure(&rng, 2, 4 + trial % 3);
    const DiscreteMeasure c = random_measure(&rng, 2, 2 + trial % 6);
    for (double p : {1.0, 2.0}) {
      const double ab = wasserstein_p(a, b, p);
      EXPECT_NEAR(ab, wasserstein_p(b, a, p), 1e-9);
      EXPECT_LE(wasserstein_p(a, c, p), ab + wasserstein_p(b, c, p) + 1e-8);
    }
  }
}

LinearSystem double_integrator() {
  Matrix a(2, 2), b(2, 1);
  a << 0, 1, 0, 0;
  b << 0, 1;
  return LinearSystem(a, b);
}

GTEST_TEST(LqrCostTest, Examples) {
  const LinearSystem di = double_integrator();
  Matrix src = Matrix::Zero(2, 1), dst(2, 1);
  dst << 1, 0;
  EXPECT_NEAR(lqr_cost_matrix(di, 0, 1, src, dst)(0, 0), 6.0, 1e-6);

  Matrix z = Matrix::Random(2, 4);
  const Matrix phi = state_transition(di, 1, 0);
  const Matrix c = lqr_cost_matrix(di, 0, 1, z, phi * z);
  EXPECT_LT(c.diagonal().cwiseAbs().maxCoeff(), 1e-9);

  const LinearSystem scalar(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  const Matrix x = row({-1.0, 0.5, 2.0}), y = row({0.0, 3.0});
  const Matrix cs = lqr_cost_matrix(scalar, 0, 1, x, y);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(cs(i, j), 0.5 * std::pow(y(j) - x(i), 2), 1e-9);

  const LinearSystem stuck(Matrix::Zero(2, 2), Matrix(Eigen::Vector2d(1, 0)));
  try {
    lqr_cost_matrix(stuck, 0, 1, src, dst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotControllable);
  }
}

GTEST_TEST(LqrCostTest, MatchesMinimumEnergy) {
  std::mt19937 rng(8);
  Matrix a(2, 2), b(2, 1);
  a << 0.1, 1.0, -0.5, -0.2;
  b << 0.3, 1.0;
  const LinearSystem sys(a, b);
  const Matrix src = Matrix::Random(2, 3), dst = Matrix::Random(2, 3);
  const Matrix c = lqr_cost_matrix(sys, 0.0, 1.5, src, dst);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(c(i, j), 0.5 * min_energy_cost(sys, src.col(i), dst.col(j), 0.0, 1.5),
                  1e-9 * (1 + c(i, j)));
    }
  }
}

GTEST_TEST(TransformedW2Test, Examples) {
  const LinearSystem free(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const DiscreteMeasure origin = DiscreteMeasure::dirac(Vector::Zero(2));
  EXPECT_NEAR(transformed_w2(free, origin, origin), 0.0, 1e-15);

  const LinearSystem scalar(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  const DiscreteMeasure zero = DiscreteMeasure::dirac(Vector::Zero(1));
  const DiscreteMeasure target = DiscreteMeasure::dirac(Vector::Constant(1, 2.5));
  EXPECT_NEAR(transformed_w2(scalar, zero, target), 6.25, 1e-9);
  EXPECT_NEAR(transformed_w2(scalar, zero, target),
              min_energy_cost(scalar, Vector::Zero(1), Vector::Constant(1, 2.5), 0, 1), 1e-9);
}

GTEST_TEST(TransformedW2Test, TwiceTheLqrOptimum) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 2;
    const LinearSystem sys(Matrix::Random(n, n), Matrix::Random(n, 1 + trial % 2));
    const DiscreteMeasure mu0 = random_measure(&rng, n, 4);
    const DiscreteMeasure mu1 = random_measure(&rng, n, 4);
    const double lqr =
        solve_kantorovich(mu0, mu1, lqr_cost_matrix(sys, 0, 1, mu0.atoms(), mu1.atoms())).value;
    EXPECT_NEAR(transformed_w2(sys, mu0, mu1), 2.0 * lqr, 1e-8 * (1 + lqr));
  }
}

}  // namespace
}  // namespace ensot
