#include "ensot/ctrl_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ensot {

namespace {

constexpr double kMassTol = 1e-12;

}  // namespace

VectorField::VectorField(int dim, std::function<Vector(const Vector&)> fn)
    : dim_(dim), fn_(std::move(fn)) {
  require(dim_ > 0, ErrorKind::kInvalidArgument, "vector field dimension must be positive");
  require(static_cast<bool>(fn_), ErrorKind::kInvalidArgument, "vector field is empty");
}

VectorField VectorField::constant(Vector v) {
  require_finite(v, "constant field");
  const int n = static_cast<int>(v.size());
  return VectorField(n, [v = std::move(v)](const Vector&) { return v; });
}

VectorField VectorField::linear(Matrix m, Vector b) {
  require(m.rows() == m.cols() && b.size() == m.rows(), ErrorKind::kDimensionMismatch,
          "linear field needs square M and matching b");
  require_finite(m, "field matrix");
  require_finite(b, "field offset");
  const int n = static_cast<int>(b.size());
  return VectorField(n, [m = std::move(m), b = std::move(b)](const Vector& x) {
    return Vector(m * x + b);
  });
}

VectorField VectorField::interpolated(Grid grid, Matrix samples) {
  require(samples.rows() == grid.dim() && samples.cols() == grid.size(),
          ErrorKind::kDimensionMismatch, "samples must be dim x grid size");
  require_finite(samples, "field samples");
  const int n = grid.dim();
  return VectorField(n, [grid = std::move(grid), samples = std::move(samples)](const Vector& x) {
    const int dim = grid.dim();
    // Per axis: lower node index and weight of the upper node.
    std::vector<long> lower(dim), stride(dim, 1);
    std::vector<double> frac(dim, 0.0);
    for (int a = dim - 1; a > 0; --a) stride[a - 1] = stride[a] * grid.axes()[a].size();
    for (int a = 0; a < dim; ++a) {
      const Vector& ax = grid.axes()[a];
      if (ax.size() == 1) {
        lower[a] = 0;
        continue;
      }
      const double xa = std::clamp(x(a), ax(0), ax(ax.size() - 1));
      const long hi = std::upper_bound(ax.data() + 1, ax.data() + ax.size() - 1, xa) - ax.data();
      lower[a] = hi - 1;
      frac[a] = (xa - ax(hi - 1)) / (ax(hi) - ax(hi - 1));
    }
    Vector out = Vector::Zero(dim);
    for (int corner = 0; corner < (1 << dim); ++corner) {
      double w = 1.0;
      long index = 0;
      for (int a = 0; a < dim; ++a) {
        const bool up = (corner >> a) & 1;
        if (up && grid.axes()[a].size() == 1) {
          w = 0.0;
          break;
        }
        w *= up ? frac[a] : 1.0 - frac[a];
        index += (lower[a] + (up ? 1 : 0)) * stride[a];
      }
      if (w != 0.0) out += w * samples.col(index);
    }
    return out;
  });
}

VectorField VectorField::transformed(const Matrix& p) const {
  require(p.rows() == dim_ && p.cols() == dim_, ErrorKind::kDimensionMismatch,
          "transform must be square of the field dimension");
  Eigen::FullPivLU<Matrix> lu(p);
  require(lu.isInvertible(), ErrorKind::kInvalidArgument, "transform must be invertible");
  const Matrix pinv = lu.inverse();
  return VectorField(dim_, [p, pinv, fn = fn_](const Vector& y) {
    return Vector(p * fn(pinv * y));
  });
}

Vector VectorField::operator()(const Vector& x) const {
  Vector v = fn_(x);
  require(v.size() == dim_, ErrorKind::kDimensionMismatch, "vector field returned wrong size");
  return v;
}

ControlRegion::ControlRegion(Shape shape, Vector a, Vector b, double radius)
    : shape_(shape), a_(std::move(a)), b_(std::move(b)), radius_(radius) {}

ControlRegion ControlRegion::box(Vector lower, Vector upper) {
  require(lower.size() == upper.size() && lower.size() > 0, ErrorKind::kDimensionMismatch,
          "box corners must have equal positive dimension");
  require_finite(lower, "box lower corner");
  require_finite(upper, "box upper corner");
  require((lower.array() < upper.array()).all(), ErrorKind::kInvalidArgument,
          "box must be nonempty (lower < upper on every axis)");
  return ControlRegion(Shape::kBox, std::move(lower), std::move(upper), 0.0);
}

ControlRegion ControlRegion::ball(Vector center, double radius) {
  require(center.size() > 0, ErrorKind::kDimensionMismatch, "ball center must be nonempty");
  require_finite(center, "ball center");
  require(std::isfinite(radius) && radius > 0.0, ErrorKind::kInvalidArgument,
          "ball radius must be positive");
  return ControlRegion(Shape::kBall, std::move(center), Vector(), radius);
}

ControlRegion ControlRegion::transformed(const Matrix& p) const {
  require(p.rows() == dim() && p.cols() == dim(), ErrorKind::kDimensionMismatch,
          "transform must be square of the region dimension");
  Eigen::FullPivLU<Matrix> lu(p);
  require(lu.isInvertible(), ErrorKind::kInvalidArgument, "transform must be invertible");
  ControlRegion out = *this;
  const Matrix pinv = lu.inverse();
  out.inverse_ = inverse_ ? Matrix(*inverse_ * pinv) : pinv;
  return out;
}

bool ControlRegion::contains(const Vector& x) const {
  require(x.size() == dim(), ErrorKind::kDimensionMismatch, "point dimension differs from region");
  const Vector z = inverse_ ? Vector(*inverse_ * x) : x;
  if (shape_ == Shape::kBox)
    return (z.array() > a_.array()).all() && (z.array() < b_.array()).all();
  return (z - a_).norm() < radius_;
}

std::optional<double> hitting_time(const VectorField& v, const ControlRegion& d,
                                   const Vector& x, FlowDirection direction, double t_max,
                                   const HittingOptions& opts) {
  require(std::isfinite(t_max) && t_max > 0.0, ErrorKind::kInvalidArgument,
          "t_max must be positive");
  require(opts.steps > 0, ErrorKind::kInvalidArgument, "step count must be positive");
  require(v.dim() == x.size() && d.dim() == x.size(), ErrorKind::kDimensionMismatch,
          "field, region and point dimensions differ");
  require_finite(x, "start point");
  if (d.contains(x)) return 0.0;
  const double sign = direction == FlowDirection::kForward ? 1.0 : -1.0;
  auto rk4 = [&](const Vector& s, double h) {
    const Vector k1 = sign * v(s);
    const Vector k2 = sign * v(s + 0.5 * h * k1);
    const Vector k3 = sign * v(s + 0.5 * h * k2);
    const Vector k4 = sign * v(s + h * k3);
    Vector next = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) fail(ErrorKind::kNonFiniteState, "flow state became non-finite");
    return next;
  };
  const double h = t_max / opts.steps;
  Vector state = x;
  for (int k = 0; k < opts.steps; ++k) {
    const Vector next = rk4(state, h);
    if (d.contains(next)) {
      // Bisect the entry time inside this step with partial RK4 steps.
      double lo = 0.0, hi = h;
      while (hi - lo > opts.time_resolution) {
        const double mid = 0.5 * (lo + hi);
        if (d.contains(rk4(state, mid))) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      return k * h + hi;
    }
    state = next;
  }
  return std::nullopt;
}

double ReachCdf::operator()(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return cumulative[it - times.begin() - 1];
}

ReachCdf reach_cdf(const VectorField& v, const ControlRegion& d, const DiscreteMeasure& mu,
                   FlowDirection direction, double t_max, const HittingOptions& opts) {
  ReachCdf cdf;
  cdf.atom_times.assign(mu.size(), std::numeric_limits<double>::infinity());
  std::vector<int> order;
  for (int i = 0; i < mu.size(); ++i) {
    const std::optional<double> t = hitting_time(v, d, mu.atom(i), direction, t_max, opts);
    if (t) {
      cdf.atom_times[i] = *t;
      order.push_back(i);
    } else {
      cdf.unreached.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cdf.atom_times[a] < cdf.atom_times[b]; });
  double mass = 0.0;
  for (int i : order) {
    mass += mu.weight(i);
    if (!cdf.times.empty() && cdf.times.back() == cdf.atom_times[i]) {
      cdf.cumulative.back() = mass;
    } else {
      cdf.times.push_back(cdf.atom_times[i]);
      cdf.cumulative.push_back(mass);
    }
  }
  for (size_t k = 1; k < cdf.cumulative.size(); ++k)
    require(cdf.cumulative[k] >= cdf.cumulative[k - 1], ErrorKind::kNoConvergence,
            "reach CDF is not monotone");
  return cdf;
}

double quantile(const ReachCdf& cdf, double m) {
  require(std::isfinite(m) && m >= 0.0 && m <= 1.0, ErrorKind::kInvalidArgument,
          "mass level must lie in [0, 1]");
  if (m == 0.0) return 0.0;
  for (size_t k = 0; k < cdf.times.size(); ++k)
    if (cdf.cumulative[k] >= m - kMassTol) return cdf.times[k];
  fail(ErrorKind::kMassNotAttained, "reach CDF attains only " + std::to_string(cdf.total()) +
                                        " < " + std::to_string(m));
}

double sup_quantile_sum(const ReachCdf& f, const ReachCdf& h) {
  std::vector<double> marks = {0.0, 1.0};
  for (double c : f.cumulative) marks.push_back(std::clamp(c, 0.0, 1.0));
  for (double c : h.cumulative) marks.push_back(std::clamp(1.0 - c, 0.0, 1.0));
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end(),
                          [](double a, double b) { return b - a <= kMassTol; }),
              marks.end());
  auto value = [&](double m) { return quantile(f, m) + quantile(h, 1.0 - m); };
  double best = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < marks.size(); ++k) {
    best = std::max(best, value(marks[k]));
    if (k + 1 < marks.size()) best = std::max(best, value(0.5 * (marks[k] + marks[k + 1])));
  }
  return best;
}

double sup_quantile_sum_dense(const ReachCdf& f, const ReachCdf& h, int points) {
  require(points >= 2, ErrorKind::kInvalidArgument, "dense scan needs two or more points");
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double m = static_cast<double>(k) / (points - 1);
    best = std::max(best, quantile(f, m) + quantile(h, 1.0 - m));
  }
  return best;
}

ControllabilityMeasure controllability_measure(const VectorField& v, const ControlRegion& d,
                                               const DiscreteMeasure& mu0,
                                               const DiscreteMeasure& mu1, double t_max,
                                               const HittingOptions& opts) {
  const ReachCdf f = reach_cdf(v, d, mu0, FlowDirection::kForward, t_max, opts);
  const ReachCdf h = reach_cdf(v, d, mu1, FlowDirection::kBackward, t_max, opts);
  if (!f.unreached.empty() || !h.unreached.empty()) {
    std::string msg = "atoms never reach the control region:";
    for (int i : f.unreached) msg += " mu0[" + std::to_string(i) + "]";
    for (int i : h.unreached) msg += " mu1[" + std::to_string(i) + "]";
    fail(ErrorKind::kNotReachable, msg);
  }
  ControllabilityMeasure out;
  out.s = sup_quantile_sum(f, h);
  if (mu0.size() == mu1.size()) {
    double m = 0.0;
    for (int i = 0; i < mu0.size(); ++i)
      m = std::max(m, std::abs(f.atom_times[i] + h.atom_times[i]));
    out.paired = m;
    out.paired_agrees = std::abs(m - out.s) <= 1e-6;
  }
  return out;
}

}  // namespace ensot
