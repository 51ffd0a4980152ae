#include "ensot/gaussian_tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/tools/minima.hpp>

namespace ensot {

namespace {

constexpr double kBlowUp = 1e12;
constexpr int kBlocks = 7;

// Index of the grid cell [times[i], times[i+1]] holding t (clamped).
size_t cell_of(const std::vector<double>& times, double t) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  size_t i = it == times.begin() ? 0 : static_cast<size_t>(it - times.begin()) - 1;
  return std::min(i, times.size() - 2);
}

void check_unit_time(double t) {
  require(std::isfinite(t) && t >= -1e-12 && t <= 1.0 + 1e-12, ErrorKind::kInvalidArgument,
          "interpolation time must lie in [0, 1]");
}

Matrix riccati_rhs(const Matrix& a, const Matrix& b, const Matrix& k) {
  const Matrix kb = k * b;
  return -a.transpose() * k - k * a + kb * kb.transpose();
}

void check_pd(const Matrix& s, const char* what) {
  require_finite(s, what);
  if (max_asymmetry(s) > 1e-10)
    fail(ErrorKind::kNotSymmetric, std::string(what) + " is not symmetric");
  const SymmetricEigen e = jacobi_eigen(symmetrize(s));
  if (!(e.values(0) > 0.0))
    fail(ErrorKind::kNotPsd, std::string(what) + " is not positive definite");
}

}  // namespace

RiccatiSolution::RiccatiSolution(const LinearSystem& sys, const Matrix& k0,
                                 const IntegrationOptions& opts)
    : sys_(sys), times_(integration_grid(sys, 0.0, 1.0, opts)) {
  require(k0.rows() == sys.state_dim() && k0.cols() == sys.state_dim(),
          ErrorKind::kDimensionMismatch, "K(0) must be n x n");
  values_.reserve(times_.size());
  values_.push_back(symmetrize(k0));
  for (size_t i = 0; i + 1 < times_.size(); ++i) {
    const double lo = times_[i], hi = times_[i + 1];
    auto f = [&](double s, const Matrix& k) -> Matrix {
      return riccati_rhs(sys_.A(s, lo, hi), sys_.B(s, lo, hi), k);
    };
    Matrix k = symmetrize(rk4_step(f, lo, values_.back(), hi - lo));
    if (!k.allFinite() || k.norm() > kBlowUp) {
      fail(ErrorKind::kBlowUp, "Riccati solution exceeds 1e12 at t = " + std::to_string(hi));
    }
    values_.push_back(std::move(k));
  }
}

Matrix RiccatiSolution::at(double t) const {
  check_unit_time(t);
  const size_t i = cell_of(times_, t);
  const double lo = times_[i], hi = times_[i + 1];
  if (t == lo) return values_[i];
  auto f = [&](double s, const Matrix& k) -> Matrix {
    return riccati_rhs(sys_.A(s, lo, hi), sys_.B(s, lo, hi), k);
  };
  return symmetrize(rk4_step(f, lo, values_[i], t - lo));
}

Matrix RiccatiSolution::rhs(double t, const Matrix& k) const {
  return riccati_rhs(sys_.A(t), sys_.B(t), k);
}

Matrix riccati_initial(const LinearSystem& sys, const Matrix& s0, const Matrix& s1,
                       const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  require(s0.rows() == n && s0.cols() == n && s1.rows() == n && s1.cols() == n,
          ErrorKind::kDimensionMismatch, "endpoint covariances must be n x n");
  check_pd(s0, "initial covariance");
  check_pd(s1, "terminal covariance");
  const Matrix w_inv = gramian_inverse(controllability_gramian(sys, 0.0, 1.0, opts));
  const Matrix phi = state_transition(sys, 0.0, 1.0, opts);
  const Matrix h = psd_sqrt(symmetrize(s0));
  const Matrix h_inv = pd_inv_sqrt(symmetrize(s0));
  const Matrix inner = symmetrize(h * w_inv * phi * s1 * phi.transpose() * w_inv * h);
  return symmetrize(h_inv * (symmetrize(h * w_inv * h) - psd_sqrt(inner)) * h_inv);
}

RiccatiSolution riccati_solve(const LinearSystem& sys, const Matrix& s0, const Matrix& s1,
                              const IntegrationOptions& opts) {
  return RiccatiSolution(sys, riccati_initial(sys, s0, s1, opts), opts);
}

GaussianInterpolant::GaussianInterpolant(const LinearSystem& sys, const GaussianMeasure& g0,
                                         const GaussianMeasure& g1,
                                         const IntegrationOptions& opts)
    : sys_(sys),
      g0_(g0),
      g1_(g1),
      riccati_(riccati_solve(sys, g0.covariance(), g1.covariance(), opts)),
      times_(riccati_.times()) {
  const int n = sys.state_dim();
  require(g0.dim() == n && g1.dim() == n, ErrorKind::kDimensionMismatch,
          "endpoint Gaussians must live in the state space");
  Matrix z = Matrix::Zero(n, kBlocks * n);
  const Matrix id = Matrix::Identity(n, n);
  z.block(0, 0, n, n) = riccati_.k0();
  for (int blk : {1, 2, 4, 5}) z.block(0, blk * n, n, n) = id;
  table_.reserve(times_.size());
  table_.push_back(z);
  for (size_t i = 0; i + 1 < times_.size(); ++i) {
    const double lo = times_[i], hi = times_[i + 1];
    auto f = [&](double s, const Matrix& v) -> Matrix {
      const Matrix a = sys_.A(s, lo, hi), b = sys_.B(s, lo, hi);
      const Matrix k = v.block(0, 0, n, n);
      const Matrix ah = a - b * (b.transpose() * k);
      const Matrix pbh = v.block(0, 2 * n, n, n) * b;
      const Matrix pb = v.block(0, 5 * n, n, n) * b;
      Matrix d(n, kBlocks * n);
      d << riccati_rhs(a, b, k), ah * v.block(0, n, n, n), -v.block(0, 2 * n, n, n) * ah,
          pbh * pbh.transpose(), a * v.block(0, 4 * n, n, n), -v.block(0, 5 * n, n, n) * a,
          pb * pb.transpose();
      return d;
    };
    z = rk4_step(f, lo, table_.back(), hi - lo);
    z.block(0, 0, n, n) = symmetrize(z.block(0, 0, n, n));
    if (!z.allFinite() || z.block(0, 0, n, n).norm() > kBlowUp) {
      fail(ErrorKind::kBlowUp, "interpolant dynamics blew up at t = " + std::to_string(hi));
    }
    table_.push_back(z);
  }

  const Matrix& end = table_.back();
  const Matrix hat_back = end.block(0, 2 * n, n, n);  // Phih(0,1)
  const Matrix hat_gramian = symmetrize(end.block(0, 3 * n, n, n));
  mean_gain_ = gramian_inverse(hat_gramian) * (hat_back * g1.mean() - g0.mean());

  const Matrix phi_back = end.block(0, 5 * n, n, n);  // Phi(0,1)
  const Matrix w_inv = gramian_inverse(symmetrize(end.block(0, 6 * n, n, n)));
  s0_sqrt_ = psd_sqrt(g0.covariance());
  s0_inv_sqrt_ = pd_inv_sqrt(g0.covariance());
  const Matrix inner = symmetrize(s0_sqrt_ * w_inv * phi_back * g1.covariance() *
                                  phi_back.transpose() * w_inv * s0_sqrt_);
  const SymmetricEigen e = jacobi_eigen(inner);
  if (e.values(0) < -1e-8 * std::max(1.0, e.values(n - 1))) {
    fail(ErrorKind::kNotPsd, "interpolant square-root argument is indefinite");
  }
  cov_shift_ = psd_sqrt(inner, 1e-8 * std::max(1.0, e.values(n - 1))) -
               symmetrize(s0_sqrt_ * w_inv * s0_sqrt_);
}

Matrix GaussianInterpolant::state(double t) const {
  check_unit_time(t);
  t = std::clamp(t, 0.0, 1.0);
  const int n = sys_.state_dim();
  const size_t i = cell_of(times_, t);
  const double lo = times_[i], hi = times_[i + 1];
  if (t == lo) return table_[i];
  if (t == hi) return table_[i + 1];
  auto f = [&](double s, const Matrix& v) -> Matrix {
    const Matrix a = sys_.A(s, lo, hi), b = sys_.B(s, lo, hi);
    const Matrix k = v.block(0, 0, n, n);
    const Matrix ah = a - b * (b.transpose() * k);
    const Matrix pbh = v.block(0, 2 * n, n, n) * b;
    const Matrix pb = v.block(0, 5 * n, n, n) * b;
    Matrix d(n, kBlocks * n);
    d << riccati_rhs(a, b, k), ah * v.block(0, n, n, n), -v.block(0, 2 * n, n, n) * ah,
        pbh * pbh.transpose(), a * v.block(0, 4 * n, n, n), -v.block(0, 5 * n, n, n) * a,
        pb * pb.transpose();
    return d;
  };
  return rk4_step(f, lo, table_[i], t - lo);
}

Vector GaussianInterpolant::mean(double t) const {
  const int n = sys_.state_dim();
  const Matrix z = state(t);
  return z.block(0, n, n, n) * (g0_.mean() + z.block(0, 3 * n, n, n) * mean_gain_);
}

Matrix GaussianInterpolant::covariance(double t) const {
  const int n = sys_.state_dim();
  const Matrix z = state(t);
  // Sigma_t = Y Y' with Y = Phi(t,0) [W(0,t) S0^{-1/2} shift + S0^{1/2}].
  const Matrix y = z.block(0, 4 * n, n, n) *
                   (symmetrize(z.block(0, 6 * n, n, n)) * s0_inv_sqrt_ * cov_shift_ + s0_sqrt_);
  return symmetrize(y * y.transpose());
}

Vector GaussianInterpolant::m(double t) const {
  const int n = sys_.state_dim();
  return state(t).block(0, 2 * n, n, n).transpose() * mean_gain_;
}

Matrix GaussianInterpolant::hat_transition(double t) const {
  const int n = sys_.state_dim();
  return state(t).block(0, n, n, n);
}

std::vector<Vector> infer_state_means(const LinearSystem& sys,
                                      const std::vector<Vector>& output_means,
                                      const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  const int steps = static_cast<int>(output_means.size());
  require(steps >= 1, ErrorKind::kInvalidArgument, "need at least one output mean");
  int rows = 0;
  for (int k = 0; k < steps; ++k) {
    const Matrix c = sys.C(k);
    require(output_means[k].size() == c.rows(), ErrorKind::kDimensionMismatch,
            "output mean " + std::to_string(k) + " does not match C(k)");
    if (matrix_rank(c) < c.rows()) {
      fail(ErrorKind::kInfeasibleConstraint,
           "C(" + std::to_string(k) + ") does not have full row rank");
    }
    rows += static_cast<int>(c.rows());
  }
  const int dim = n * steps;
  Matrix q = Matrix::Zero(dim, dim);
  for (int k = 0; k + 1 < steps; ++k) {
    const Matrix phi = state_transition(sys, k + 1, k, opts);
    const Matrix w_inv = gramian_inverse(controllability_gramian(sys, k + 1, k, opts));
    // d = [-Phi, I] [nu_k; nu_{k+1}]
    Matrix d(n, 2 * n);
    d << -phi, Matrix::Identity(n, n);
    q.block(k * n, k * n, 2 * n, 2 * n) += d.transpose() * w_inv * d;
  }
  Matrix a_eq = Matrix::Zero(rows, dim);
  Vector b_eq(rows);
  int r = 0;
  for (int k = 0; k < steps; ++k) {
    const Matrix c = sys.C(k);
    a_eq.block(r, k * n, c.rows(), n) = c;
    b_eq.segment(r, c.rows()) = output_means[k];
    r += static_cast<int>(c.rows());
  }
  const Vector x = solve_equality_qp(symmetrize(q), Vector::Zero(dim), a_eq, b_eq);
  std::vector<Vector> out;
  for (int k = 0; k < steps; ++k) out.push_back(x.segment(k * n, n));
  return out;
}

double bures_cost(const Matrix& p, const Matrix& q) {
  const Matrix ps = psd_sqrt(symmetrize(p), 1e-8 * std::max(1.0, p.norm()));
  const SymmetricEigen e = jacobi_eigen(symmetrize(ps * q * ps));
  const double cross = e.values.cwiseMax(0.0).cwiseSqrt().sum();
  return std::max(0.0, p.trace() + q.trace() - 2.0 * cross);
}

namespace {

struct IntervalMaps {
  Matrix from;  // W^{-1/2} Phi
  Matrix to;    // W^{-1/2}
};

std::vector<IntervalMaps> interval_maps(const LinearSystem& sys, int intervals,
                                        const IntegrationOptions& opts) {
  std::vector<IntervalMaps> maps;
  for (int k = 0; k < intervals; ++k) {
    const Matrix l = gramian_inv_sqrt(controllability_gramian(sys, k + 1, k, opts));
    maps.push_back({l * state_transition(sys, k + 1, k, opts), l});
  }
  return maps;
}

double interval_cost(const IntervalMaps& m, const Matrix& s0, const Matrix& s1) {
  return bures_cost(symmetrize(m.from * s0 * m.from.transpose()),
                    symmetrize(m.to * s1 * m.to.transpose()));
}

// Covariance S = T [[Y, Y^{1/2} F], [F' Y^{1/2}, F'F + G G']] T' with
// T = [C^+, Z], Z a kernel basis of C. Only F and the lower triangle of G are
// free, so C S C' = Y holds identically and S is PSD by construction.
struct Slot {
  Matrix t;
  Matrix y_sqrt;
  int p = 0, r = 0;
  double scale = 1.0;
  Vector params;  // F (column-major), then G's lower triangle by columns

  Matrix covariance() const {
    if (r == 0) return symmetrize(t * y_sqrt * y_sqrt * t.transpose());
    const Matrix f = Eigen::Map<const Matrix>(params.data(), p, r);
    Matrix g = Matrix::Zero(r, r);
    int idx = p * r;
    for (int c = 0; c < r; ++c)
      for (int i = c; i < r; ++i) g(i, c) = params(idx++);
    // factor' factor reproduces the block matrix above.
    Matrix factor = Matrix::Zero(p + r, p + r);
    factor.topLeftCorner(p, p) = y_sqrt;
    factor.topRightCorner(p, r) = f;
    factor.bottomRightCorner(r, r) = g.transpose();
    const Matrix sz = factor.transpose() * factor;
    return symmetrize(t * sz * t.transpose());
  }

  bool is_diagonal_param(int index) const {
    int idx = p * r;
    if (index < idx) return false;
    for (int c = 0; c < r; ++c) {
      if (index == idx) return true;
      idx += r - c;
    }
    return false;
  }
};

}  // namespace

double covariance_transport_cost(const LinearSystem& sys, const std::vector<Matrix>& covs,
                                 const IntegrationOptions& opts) {
  const int intervals = static_cast<int>(covs.size()) - 1;
  const auto maps = interval_maps(sys, intervals, opts);
  double total = 0.0;
  for (int k = 0; k < intervals; ++k) total += interval_cost(maps[k], covs[k], covs[k + 1]);
  return total;
}

CovarianceInference infer_state_covariances(const LinearSystem& sys,
                                            const std::vector<Matrix>& output_covs,
                                            const CovarianceOptions& copts,
                                            const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  const int steps = static_cast<int>(output_covs.size());
  require(steps >= 1, ErrorKind::kInvalidArgument, "need at least one output covariance");
  std::vector<Slot> slots(steps);
  for (int k = 0; k < steps; ++k) {
    const Matrix c = sys.C(k);
    const Matrix& y = output_covs[k];
    require(y.rows() == c.rows() && y.cols() == c.rows(), ErrorKind::kDimensionMismatch,
            "output covariance " + std::to_string(k) + " does not match C(k)");
    if (matrix_rank(c) < c.rows()) {
      fail(ErrorKind::kInfeasibleConstraint,
           "C(" + std::to_string(k) + ") does not have full row rank");
    }
    check_pd(y, "output covariance");
    Slot& s = slots[k];
    s.p = static_cast<int>(c.rows());
    s.r = n - s.p;
    const Matrix pinv = c.transpose() * (c * c.transpose()).inverse();
    s.t.resize(n, n);
    s.t.leftCols(s.p) = pinv;
    if (s.r > 0) s.t.rightCols(s.r) = null_space(c);
    s.y_sqrt = psd_sqrt(symmetrize(y));
    s.scale = std::sqrt(y.trace() / s.p);
    s.params = Vector::Zero(s.p * s.r + s.r * (s.r + 1) / 2);
    for (int i = 0; i < s.params.size(); ++i)
      if (s.is_diagonal_param(i)) s.params(i) = s.scale;
  }

  const auto maps = interval_maps(sys, steps - 1, opts);
  std::vector<Matrix> covs(steps);
  for (int k = 0; k < steps; ++k) covs[k] = slots[k].covariance();
  auto local_cost = [&](int k) {
    double v = 0.0;
    if (k > 0) v += interval_cost(maps[k - 1], covs[k - 1], covs[k]);
    if (k + 1 < steps) v += interval_cost(maps[k], covs[k], covs[k + 1]);
    return v;
  };
  auto total_cost = [&] {
    double v = 0.0;
    for (int k = 0; k + 1 < steps; ++k) v += interval_cost(maps[k], covs[k], covs[k + 1]);
    return v;
  };

  CovarianceInference out;
  double current = total_cost();
  const int bits = std::numeric_limits<double>::digits / 2;
  while (true) {
    const double before = current;
    for (int k = 0; k < steps; ++k) {
      Slot& s = slots[k];
      for (int i = 0; i < s.params.size(); ++i) {
        const double floor = s.is_diagonal_param(i) ? copts.hidden_floor * s.scale
                                                    : -std::numeric_limits<double>::infinity();
        const double start = s.params(i);
        auto f = [&](double v) {
          s.params(i) = v;
          covs[k] = s.covariance();
          return local_cost(k);
        };
        const double base = f(start);
        double radius = std::max(std::abs(start), s.scale);
        double best_x = start, best_f = base;
        for (int expand = 0; expand < 30; ++expand) {
          const double lo = std::max(floor, start - radius), hi = start + radius;
          const auto [x, fx] = boost::math::tools::brent_find_minima(f, lo, hi, bits);
          if (fx < best_f) {
            best_x = x;
            best_f = fx;
          }
          const bool at_edge = hi - x < 1e-6 * radius || (x - lo < 1e-6 * radius && lo > floor);
          if (!at_edge) break;
          radius *= 4.0;
        }
        f(best_x);
      }
    }
    current = total_cost();
    ++out.sweeps;
    if (before - current < copts.tolerance) break;
    if (out.sweeps >= copts.max_sweeps) {
      fail(ErrorKind::kNoConvergence, "covariance descent did not settle within " +
                                          std::to_string(copts.max_sweeps) + " sweeps");
    }
  }
  out.covariances = covs;
  out.objective = current;
  return out;
}

GaussianTrack track_gaussian(const LinearSystem& sys, const std::vector<GaussianMeasure>& outputs,
                             int samples_per_interval, const CovarianceOptions& copts,
                             const IntegrationOptions& opts) {
  require(outputs.size() >= 2, ErrorKind::kInvalidArgument, "need at least two output laws");
  require(samples_per_interval >= 1, ErrorKind::kInvalidArgument,
          "samples_per_interval must be >= 1");
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (const auto& g : outputs) {
    means.push_back(g.mean());
    covs.push_back(g.covariance());
  }
  GaussianTrack track;
  track.state_means = infer_state_means(sys, means, opts);
  const CovarianceInference ci = infer_state_covariances(sys, covs, copts, opts);
  track.state_covariances = ci.covariances;
  track.covariance_objective = ci.objective;
  const int intervals = static_cast<int>(outputs.size()) - 1;
  for (int k = 0; k < intervals; ++k) {
    const GaussianInterpolant interp(
        sys.shifted(k), GaussianMeasure(track.state_means[k], track.state_covariances[k]),
        GaussianMeasure(track.state_means[k + 1], track.state_covariances[k + 1]), opts);
    for (int s = (k == 0 ? 0 : 1); s <= samples_per_interval; ++s) {
      const double tau = static_cast<double>(s) / samples_per_interval;
      track.times.push_back(k + tau);
      track.means.push_back(interp.mean(tau));
      track.covariances.push_back(interp.covariance(tau));
    }
  }
  return track;
}

}  // namespace ensot
