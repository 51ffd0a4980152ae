#include "ensot/lti.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace ensot {
namespace {

using testing::expm_reference;
using testing::van_loan_gramian;

LinearSystem double_integrator() {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix b(2, 1);
  b << 0, 1;
  return LinearSystem(a, b);
}

Matrix random_matrix(int rows, int cols, std::mt19937* gen, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = normal(*gen);
  return m;
}

// Smooth time-varying system A(t) = A0 + sin(t) A1, B(t) = B0 + cos(2t) B1.
LinearSystem random_ltv(int n, int m, std::mt19937* gen) {
  const Matrix a0 = random_matrix(n, n, gen, 0.6);
  const Matrix a1 = random_matrix(n, n, gen, 0.4);
  const Matrix b0 = random_matrix(n, m, gen);
  const Matrix b1 = random_matrix(n, m, gen, 0.3);
  return LinearSystem(
      MatrixFunction::callable(n, n, [=](double t) -> Matrix { return a0 + std::sin(t) * a1; }),
      MatrixFunction::callable(n, m,
                               [=](double t) -> Matrix { return b0 + std::cos(2 * t) * b1; }));
}

GTEST_TEST(MatrixFunction, PiecewiseTakesRightLimit) {
  const MatrixFunction f = MatrixFunction::piecewise(
      {0.0, 1.0, 2.0}, {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0),
                        Matrix::Constant(1, 1, 3.0)});
  EXPECT_EQ(f(-5.0)(0, 0), 1.0);
  EXPECT_EQ(f(0.5)(0, 0), 1.0);
  EXPECT_EQ(f(1.0)(0, 0), 2.0);
  EXPECT_EQ(f(2.0)(0, 0), 3.0);
  EXPECT_EQ(f(9.0)(0, 0), 3.0);
  EXPECT_EQ(f.breakpoints(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(f.shifted(1.0)(0.0)(0, 0), 2.0);
  EXPECT_THROW(MatrixFunction::piecewise({1.0, 0.0}, {Matrix::Zero(1, 1), Matrix::Zero(1, 1)}),
               Error);
}

GTEST_TEST(LinearSystem, DimensionChecks) {
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 3), Matrix::Zero(2, 1)), Error);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 2), Matrix::Zero(3, 1)), Error);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(1, 3)), Error);
  const LinearSystem sys = double_integrator();
  EXPECT_EQ(sys.state_dim(), 2);
  EXPECT_EQ(sys.input_dim(), 1);
  EXPECT_EQ(sys.output_dim(), 2);
}

GTEST_TEST(IntegrationGrid, EvenSegmentsThroughBreakpoints) {
  const LinearSystem sys(
      MatrixFunction::piecewise({0.0, 0.3}, {Matrix::Zero(1, 1), Matrix::Ones(1, 1)}),
      Matrix::Ones(1, 1));
  const IntegrationOptions opts{10};
  const std::vector<double> grid = integration_grid(sys, 0.0, 1.0, opts);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  // 0.3 -> 3 steps rounded to 4; 0.7 -> 7 steps rounded to 8.
  EXPECT_EQ(grid.size(), 13u);
  EXPECT_EQ(grid[4], 0.3);
  const std::vector<double> back = integration_grid(sys, 1.0, 0.0, opts);
  EXPECT_EQ(back.front(), 1.0);
  EXPECT_EQ(back.back(), 0.0);
}

GTEST_TEST(StateTransition, Identity) {
  std::mt19937 gen(1);
  const LinearSystem sys = random_ltv(3, 1, &gen);
  EXPECT_EQ(state_transition(sys, 0.7, 0.7), Matrix::Identity(3, 3));
}

GTEST_TEST(StateTransition, Nilpotent) {
  Matrix expected(2, 2);
  expected << 1, 1, 0, 1;
  EXPECT_LT((state_transition(double_integrator(), 1.0, 0.0) - expected).norm(), 1e-9);
}

GTEST_TEST(StateTransition, ScalarExponential) {
  const LinearSystem sys(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  for (auto [t, s] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {2.5, -0.5}}) {
    EXPECT_NEAR(state_transition(sys, t, s)(0, 0), std::exp(t - s), 1e-9 * std::exp(t - s));
  }
}

GTEST_TEST(StateTransition, SemigroupAndInverse) {
  std::mt19937 gen(2);
  std::uniform_real_distribution<double> time(-1.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const LinearSystem sys = random_ltv(2 + trial % 3, 1, &gen);
    const double t0 = time(gen), t1 = time(gen), t2 = time(gen);
    const Matrix p20 = state_transition(sys, t2, t0);
    const Matrix p21 = state_transition(sys, t2, t1);
    const Matrix p10 = state_transition(sys, t1, t0);
    EXPECT_LT((p20 - p21 * p10).norm(), 1e-8);
    const Matrix p01 = state_transition(sys, t0, t1);
    EXPECT_LT((p10 * p01 - Matrix::Identity(sys.state_dim(), sys.state_dim())).norm(), 1e-8);
  }
}

GTEST_TEST(StateTransition, MatchesMatrixExponential) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 3;
    const Matrix a = random_matrix(n, n, &gen);
    const LinearSystem sys(a, Matrix::Zero(n, 1));
    EXPECT_LT((state_transition(sys, 1.3, 0.2) - expm_reference(1.1 * a)).norm(), 1e-8);
    EXPECT_LT((state_transition(sys, 0.2, 1.3) - expm_reference(-1.1 * a)).norm(), 1e-8);
  }
}

GTEST_TEST(StateTransition, PiecewiseTable) {
  std::mt19937 gen(4);
  const Matrix a1 = random_matrix(3, 3, &gen);
  const Matrix a2 = random_matrix(3, 3, &gen);
  const LinearSystem sys(MatrixFunction::piecewise({0.0, 0.37}, {a1, a2}), Matrix::Zero(3, 1));
  const Matrix expected = expm_reference(0.63 * a2) * expm_reference(0.37 * a1);
  EXPECT_LT((state_transition(sys, 1.0, 0.0) - expected).norm(), 1e-8);
  EXPECT_LT((state_transition(sys, 0.0, 1.0) - expected.inverse()).norm(), 1e-8);
}

GTEST_TEST(ControllabilityGramian, DoubleIntegrator) {
  const LinearSystem sys = double_integrator();
  Matrix w01(2, 2), w10(2, 2);
  w01 << 1.0 / 3, -0.5, -0.5, 1.0;
  w10 << 1.0 / 3, 0.5, 0.5, 1.0;
  EXPECT_LT((controllability_gramian(sys, 0.0, 1.0) - w01).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((controllability_gramian(sys, 1.0, 0.0) - w10).cwiseAbs().maxCoeff(), 1e-8);
}

GTEST_TEST(ControllabilityGramian, ZeroInput) {
  const LinearSystem sys(Matrix::Identity(2, 2), Matrix::Zero(2, 1));
  EXPECT_EQ(controllability_gramian(sys, 0.0, 1.0), Matrix::Zero(2, 2));
}

GTEST_TEST(ControllabilityGramian, VanLoan) {
  std::mt19937 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 3;
    const Matrix a = random_matrix(n, n, &gen);
    const Matrix b = random_matrix(n, 1 + trial % 2, &gen);
    const LinearSystem sys(a, b);
    // Evaluation point t1: W = int_0^T e^{As} B B' e^{A's} ds with T = t1 - t0.
    const Matrix ref = van_loan_gramian(a, b, 0.8);
    EXPECT_LT((controllability_gramian(sys, 1.0, 0.2) - ref).norm(), 1e-8 * (1 + ref.norm()));
  }
}

GTEST_TEST(ControllabilityGramian, SymmetricPsdAndOrientationIdentity) {
  std::mt19937 gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const LinearSystem sys = random_ltv(2 + trial % 3, 1, &gen);
    const Matrix w10 = controllability_gramian(sys, 1.0, 0.0);
    const Matrix w01 = controllability_gramian(sys, 0.0, 1.0);
    for (const Matrix& w : {w10, w01}) {
      EXPECT_LT(max_asymmetry(w), 1e-9);
      EXPECT_GT(jacobi_eigen(w).values(0), -1e-9);
    }
    const Matrix phi = state_transition(sys, 1.0, 0.0);
    EXPECT_LT((w10 - phi * w01 * phi.transpose()).norm(), 1e-8);
  }
}

GTEST_TEST(ObservabilityGramian, Examples) {
  EXPECT_EQ(observability_gramian(LinearSystem(Matrix::Ones(2, 2), Matrix::Zero(2, 1),
                                               Matrix::Zero(1, 2)),
                                  0.0, 1.0),
            Matrix::Zero(2, 2));
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix c(1, 2);
  c << 1, 0;
  Matrix expected(2, 2);
  expected << 1, 0.5, 0.5, 1.0 / 3;
  const Matrix m = observability_gramian(LinearSystem(a, Matrix::Zero(2, 1), c), 0.0, 1.0);
  EXPECT_LT((m - expected).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix id =
      observability_gramian(LinearSystem(Matrix::Zero(3, 3), Matrix::Zero(3, 1)), 0.0, 1.0);
  EXPECT_LT((id - Matrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_THROW(observability_gramian(double_integrator(), 1.0, 0.0), Error);
}

GTEST_TEST(MinEnergyCost, Examples) {
  const LinearSystem sys = double_integrator();
  EXPECT_NEAR(min_energy_cost(sys, Vector::Zero(2), Vector::Unit(2, 0), 0.0, 1.0), 12.0, 1e-6);
  const Vector x0 = Eigen::Vector2d(0.3, -1.0);
  const Vector free = state_transition(sys, 1.0, 0.0) * x0;
  EXPECT_NEAR(min_energy_cost(sys, x0, free, 0.0, 1.0), 0.0, 1e-12);
  const LinearSystem scalar(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  EXPECT_NEAR(min_energy_cost(scalar, Vector::Zero(1), Vector::Constant(1, 2.5), 0.0, 1.0),
              6.25, 1e-9);
}

GTEST_TEST(MinEnergyCost, OrientationSymmetric) {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    const LinearSystem sys = random_ltv(3, 1, &gen);
    const Vector x0 = random_matrix(3, 1, &gen);
    const Vector x1 = random_matrix(3, 1, &gen);
    // Same cost through W(t0,t1) and Phi(t0,t1).
    const Vector d = state_transition(sys, 0.0, 1.0) * x1 - x0;
    const double other = d.dot(gramian_inverse(controllability_gramian(sys, 0.0, 1.0)) * d);
    const double cost = min_energy_cost(sys, x0, x1, 0.0, 1.0);
    EXPECT_NEAR(cost, other, 1e-8 * (1 + cost));
  }
}

GTEST_TEST(MinEnergyCost, NotControllable) {
  Matrix b(2, 1);
  b << 0, 1;
  const LinearSystem sys(Matrix::Zero(2, 2), b);
  try {
    min_energy_cost(sys, Vector::Zero(2), Vector::Ones(2), 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotControllable);
  }
  EXPECT_THROW(min_energy_control(sys, Vector::Zero(2), Vector::Ones(2), 0.0, 1.0), Error);
}

GTEST_TEST(MinEnergyControl, DoubleIntegrator) {
  const LinearSystem sys = double_integrator();
  const FeedbackLaw law = min_energy_control(sys, Vector::Zero(2), Vector::Unit(2, 0), 0.0, 1.0);
  const ClosedLoopTrajectory traj = simulate_closed_loop(law, Vector::Zero(2));
  EXPECT_LT((traj.states.back() - Vector::Unit(2, 0)).norm(), 1e-4);
  EXPECT_NEAR(traj.energy, 12.0, 1e-3);
  // Open-loop optimum: u(t) = 6 - 12 t, position 3t^2 - 2t^3.
  for (size_t i = 0; i < traj.times.size(); i += 97) {
    const double t = traj.times[i];
    EXPECT_NEAR(traj.states[i](0), 3 * t * t - 2 * t * t * t, 1e-6);
    if (i < traj.controls.size()) {
      EXPECT_NEAR(traj.controls[i](0), 6 - 12 * t, 1e-5 * (1 + 1 / (1 - t)));
    }
  }
}

GTEST_TEST(MinEnergyControl, ScalarConstantControl) {
  const LinearSystem sys(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  const FeedbackLaw law = min_energy_control(sys, Vector::Zero(1), Vector::Ones(1), 0.0, 1.0);
  const ClosedLoopTrajectory traj = simulate_closed_loop(law, Vector::Zero(1));
  for (const Vector& u : traj.controls) EXPECT_NEAR(u(0), 1.0, 1e-6);
}

GTEST_TEST(MinEnergyControl, FreeMotionNeedsNoControl) {
  std::mt19937 gen(8);
  const LinearSystem sys = random_ltv(3, 2, &gen);
  const Vector x0 = random_matrix(3, 1, &gen);
  const Vector x1 = state_transition(sys, 1.5, 0.5) * x0;
  const FeedbackLaw law = min_energy_control(sys, x0, x1, 0.5, 1.5);
  const ClosedLoopTrajectory traj = simulate_closed_loop(law, x0);
  for (size_t i = 0; i < traj.controls.size(); i += 50) {
    EXPECT_LT(traj.controls[i].norm(), 1e-6);
  }
  EXPECT_LT(traj.energy, 1e-8);
}

GTEST_TEST(MinEnergyControl, RejectsTerminalTime) {
  const FeedbackLaw law =
      min_energy_control(double_integrator(), Vector::Zero(2), Vector::Unit(2, 0), 0.0, 1.0);
  EXPECT_THROW(law(1.0, Vector::Zero(2)), Error);
  EXPECT_THROW(law(1.5, Vector::Zero(2)), Error);
  EXPECT_NO_THROW(law(0.999, Vector::Zero(2)));
}

GTEST_TEST(MinEnergyControl, EnergyMatchesCostOnRandomSystems) {
  std::mt19937 gen(9);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 2 + trial % 3;
    const LinearSystem sys = trial % 2 ? random_ltv(n, 1, &gen)
                                       : LinearSystem(random_matrix(n, n, &gen),
                                                      random_matrix(n, 1, &gen));
    const Vector x0 = random_matrix(n, 1, &gen);
    const Vector x1 = random_matrix(n, 1, &gen);
    const double cost = min_energy_cost(sys, x0, x1, 0.0, 1.0);
    const ClosedLoopTrajectory traj =
        simulate_closed_loop(min_energy_control(sys, x0, x1, 0.0, 1.0), x0);
    EXPECT_NEAR(traj.energy, cost, 1e-3 * cost);
    EXPECT_LT((traj.states.back() - x1).norm(), 1e-4);
  }
}

GTEST_TEST(MinEnergyControl, PiecewiseInput) {
  // B switches on half way: all steering happens on [0.5, 1].
  Matrix b(2, 1);
  b << 0, 1;
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  const LinearSystem sys(a, MatrixFunction::piecewise({0.0, 0.5}, {Matrix::Zero(2, 1), b}));
  const Vector x1 = Eigen::Vector2d(1.0, 0.0);
  const double cost = min_energy_cost(sys, Vector::Zero(2), x1, 0.0, 1.0);
  // Double integrator over a half-length horizon: 12 / T^3.
  EXPECT_NEAR(cost, 96.0, 1e-6);
  const ClosedLoopTrajectory traj =
      simulate_closed_loop(min_energy_control(sys, Vector::Zero(2), x1, 0.0, 1.0), Vector::Zero(2));
  EXPECT_NEAR(traj.energy, cost, 1e-3 * cost);
  EXPECT_LT((traj.states.back() - x1).norm(), 1e-4);
}

GTEST_TEST(ClosedLoopFlow, MatchesSimulation) {
  std::mt19937 gen(10);
  const LinearSystem sys = random_ltv(3, 1, &gen);
  const Vector x0 = random_matrix(3, 1, &gen);
  const Vector x1 = random_matrix(3, 1, &gen);
  const auto gains = std::make_shared<MinEnergyGains>(sys, 0.0, 1.0);
  const ClosedLoopTrajectory traj = simulate_closed_loop(FeedbackLaw(gains, x1), x0);
  Vector z(6);
  z << x0, x1;
  for (size_t i : {size_t{0}, size_t{250}, size_t{731}}) {
    const Matrix pq = closed_loop_flow(*gains, traj.times[i]);
    EXPECT_LT((pq * z - traj.states[i]).norm(), 1e-9);
  }
  const Matrix end = closed_loop_flow(*gains, 1.0);
  EXPECT_LT((end * z - x1).norm(), 1e-4);
}

GTEST_TEST(ExpectedMinEnergyGaussian, DeterministicCase) {
  std::mt19937 gen(11);
  const LinearSystem sys = random_ltv(2, 1, &gen);
  const Vector m0 = random_matrix(2, 1, &gen);
  const Vector m1 = random_matrix(2, 1, &gen);
  const Matrix z = Matrix::Zero(2, 2);
  const double value = expected_min_energy_gaussian(sys, m0, z, m1, z, z, 0.0, 1.0);
  EXPECT_NEAR(value, min_energy_cost(sys, m0, m1, 0.0, 1.0), 1e-9 * (1 + value));
}

GTEST_TEST(ExpectedMinEnergyGaussian, ScalarIdentical) {
  const LinearSystem sys(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  const Matrix one = Matrix::Ones(1, 1);
  EXPECT_NEAR(
      expected_min_energy_gaussian(sys, Vector::Zero(1), one, Vector::Zero(1), one, one, 0.0, 1.0),
      0.0, 1e-12);
}

GTEST_TEST(ExpectedMinEnergyGaussian, MonteCarlo) {
  std::mt19937 gen(12);
  const LinearSystem sys = random_ltv(2, 1, &gen);
  const Matrix l = random_matrix(4, 4, &gen, 0.5);
  const Matrix joint = l * l.transpose();
  const Vector mean = random_matrix(4, 1, &gen);
  const double value = expected_min_energy_gaussian(
      sys, mean.head(2), joint.topLeftCorner(2, 2), mean.tail(2), joint.bottomRightCorner(2, 2),
      joint.topRightCorner(2, 2), 0.0, 1.0);
  // Per-sample cost in the (t1, t0) orientation.
  const Matrix phi = state_transition(sys, 1.0, 0.0);
  const Matrix w_inv = gramian_inverse(controllability_gramian(sys, 1.0, 0.0));
  const Matrix chol = joint.llt().matrixL();
  std::normal_distribution<double> normal;
  double acc = 0.0;
  const int samples = 100000;
  for (int s = 0; s < samples; ++s) {
    Vector g(4);
    for (int i = 0; i < 4; ++i) g(i) = normal(gen);
    const Vector x = mean + chol * g;
    const Vector d = x.tail(2) - phi * x.head(2);
    acc += d.dot(w_inv * d);
  }
  EXPECT_NEAR(acc / samples, value, 0.01 * value);
}

GTEST_TEST(IsObservablePair, Examples) {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  EXPECT_TRUE(is_observable_pair(a, (Matrix(1, 2) << 1, 0).finished()));
  EXPECT_FALSE(is_observable_pair(a, (Matrix(1, 2) << 0, 1).finished()));
  std::mt19937 gen(13);
  EXPECT_TRUE(is_observable_pair(random_matrix(4, 4, &gen), Matrix::Identity(4, 4)));
  EXPECT_THROW(is_observable_pair(a, Matrix::Identity(3, 3)), Error);
}

}  // namespace
}  // namespace ensot
