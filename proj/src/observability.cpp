#include "ensot/observability.hpp"

#include <cmath>
#include <string>

#include "ensot/transport.hpp"

namespace ensot {

namespace {

void check_pair(const Matrix& a, const Matrix& c) {
  require(a.rows() == a.cols(), ErrorKind::kDimensionMismatch, "A must be square");
  require(c.cols() == a.rows(), ErrorKind::kDimensionMismatch,
          "C must have as many columns as A");
  require_finite(a, "A");
  require_finite(c, "C");
}

// Uncontrolled LTI system used to evaluate e^{At} through state_transition.
LinearSystem free_system(const Matrix& a, const Matrix& c) {
  return LinearSystem(a, Matrix::Zero(a.rows(), 1), c);
}

// Unit vector minimizing ||O v||: the last right singular vector.
Vector unobservable_direction(const Matrix& o) {
  Eigen::JacobiSVD<Matrix> svd(o, Eigen::ComputeFullV);
  return svd.matrixV().col(o.cols() - 1);
}

}  // namespace

EnsembleObservabilityReport ensemble_observable_lti(const Matrix& a, const Matrix& c) {
  check_pair(a, c);
  const Matrix o = observability_matrix(a, c);
  const Elimination e = eliminate(o, 1e-10);
  EnsembleObservabilityReport report;
  report.observable = e.rank == a.rows();
  report.method = "kalman-rank; equivalence holds for discrete ensembles";
  if (report.observable) {
    report.pivot_columns = e.pivot_columns;
  } else {
    report.witness = unobservable_direction(o);
  }
  return report;
}

std::vector<double> default_kernel_time_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(0.1 * k);
  return grid;
}

double kernel_intersection_time(const Matrix& a, const Matrix& c, const Matrix& points,
                                const std::vector<double>& time_grid,
                                const IntegrationOptions& opts) {
  check_pair(a, c);
  require(points.rows() == a.rows(), ErrorKind::kDimensionMismatch,
          "points must live in the state space");
  require(points.cols() > 0, ErrorKind::kInvalidArgument, "point set must be nonempty");
  require(!time_grid.empty(), ErrorKind::kInvalidArgument, "time grid must be nonempty");
  for (Eigen::Index j = 0; j < points.cols(); ++j)
    require(points.col(j).norm() > 0.0, ErrorKind::kInvalidArgument, "points must be nonzero");
  for (size_t k = 1; k < time_grid.size(); ++k)
    require(time_grid[k] > time_grid[k - 1], ErrorKind::kInvalidArgument,
            "time grid must be increasing");
  require(time_grid.front() >= 0.0, ErrorKind::kInvalidArgument, "times must be nonnegative");

  const LinearSystem sys = free_system(a, c);
  const Vector norms = points.colwise().norm().transpose();
  Matrix phi = Matrix::Identity(a.rows(), a.rows());
  double previous = 0.0;
  for (double t : time_grid) {
    // Advance the transition one grid gap at a time.
    phi = state_transition(sys, t, previous, opts) * phi;
    previous = t;
    const Vector out = (c * phi * points).colwise().norm().transpose();
    if ((out.array() > 1e-8 * norms.array()).all()) return t;
  }
  fail(ErrorKind::kNotFound, "no grid time separates every point from ker C e^{At}");
}

std::optional<std::pair<DiscreteMeasure, DiscreteMeasure>> unobservable_counterexample(
    const Matrix& a, const Matrix& c) {
  const EnsembleObservabilityReport report = ensemble_observable_lti(a, c);
  if (report.observable) return std::nullopt;
  return std::make_pair(DiscreteMeasure::dirac(Vector::Zero(a.rows())),
                        DiscreteMeasure::dirac(-report.witness));
}

double output_discrepancy(const Matrix& a, const Matrix& c, const DiscreteMeasure& mu,
                          const DiscreteMeasure& nu, const std::vector<double>& times,
                          const IntegrationOptions& opts) {
  check_pair(a, c);
  require(mu.dim() == a.rows() && nu.dim() == a.rows(), ErrorKind::kDimensionMismatch,
          "measures must live in the state space");
  const LinearSystem sys = free_system(a, c);
  double worst = 0.0;
  for (double t : times) {
    const Matrix map = c * state_transition(sys, t, 0.0, opts);
    worst = std::max(worst, wasserstein_p(pushforward_linear(mu, map),
                                          pushforward_linear(nu, map), 1.0));
  }
  return worst;
}

}  // namespace ensot
