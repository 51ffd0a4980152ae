#include "ensot/lti.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ensot {

struct MatrixFunction::Impl {
  enum class Kind { kConstant, kTable, kCallable };
  Kind kind = Kind::kConstant;
  Eigen::Index rows = 0, cols = 0;
  Matrix constant;
  std::vector<double> times;
  std::vector<Matrix> values;
  std::function<Matrix(double)> fn;
};

MatrixFunction::MatrixFunction() : MatrixFunction(Matrix(0, 0)) {}

MatrixFunction::MatrixFunction(Matrix constant) {
  require_finite(constant, "constant matrix");
  auto impl = std::make_shared<Impl>();
  impl->rows = constant.rows();
  impl->cols = constant.cols();
  impl->constant = std::move(constant);
  impl_ = std::move(impl);
}

MatrixFunction::MatrixFunction(std::shared_ptr<const Impl> impl, double offset)
    : impl_(std::move(impl)), offset_(offset) {}

MatrixFunction MatrixFunction::piecewise(std::vector<double> times, std::vector<Matrix> values) {
  require(!times.empty() && times.size() == values.size(), ErrorKind::kDimensionMismatch,
          "piecewise table needs one matrix per breakpoint");
  for (size_t i = 1; i < times.size(); ++i) {
    require(times[i] > times[i - 1], ErrorKind::kInvalidArgument,
            "piecewise table times must be strictly increasing");
  }
  for (const Matrix& v : values) {
    require(v.rows() == values[0].rows() && v.cols() == values[0].cols(),
            ErrorKind::kDimensionMismatch, "piecewise table matrices differ in shape");
    require_finite(v, "piecewise table entry");
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::kTable;
  impl->rows = values[0].rows();
  impl->cols = values[0].cols();
  impl->times = std::move(times);
  impl->values = std::move(values);
  return MatrixFunction(std::move(impl), 0.0);
}

MatrixFunction MatrixFunction::callable(Eigen::Index rows, Eigen::Index cols,
                                        std::function<Matrix(double)> fn) {
  require(static_cast<bool>(fn), ErrorKind::kInvalidArgument, "callable matrix function is empty");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::kCallable;
  impl->rows = rows;
  impl->cols = cols;
  impl->fn = std::move(fn);
  return MatrixFunction(std::move(impl), 0.0);
}

Matrix MatrixFunction::operator()(double t) const {
  const double s = t + offset_;
  switch (impl_->kind) {
    case Impl::Kind::kConstant:
      return impl_->constant;
    case Impl::Kind::kTable: {
      const auto& ts = impl_->times;
      auto it = std::upper_bound(ts.begin(), ts.end(), s);
      const size_t idx = it == ts.begin() ? 0 : static_cast<size_t>(it - ts.begin()) - 1;
      return impl_->values[idx];
    }
    case Impl::Kind::kCallable: {
      Matrix m = impl_->fn(s);
      require(m.rows() == impl_->rows && m.cols() == impl_->cols, ErrorKind::kDimensionMismatch,
              "callable matrix function returned the wrong shape");
      require_finite(m, "callable matrix function value");
      return m;
    }
  }
  return impl_->constant;
}

Matrix MatrixFunction::on_step(double t, double lo, double hi) const {
  if (impl_->kind == Impl::Kind::kTable) return (*this)(0.5 * (lo + hi));
  return (*this)(t);
}

std::vector<double> MatrixFunction::breakpoints() const {
  std::vector<double> out;
  if (impl_->kind != Impl::Kind::kTable) return out;
  for (size_t i = 1; i < impl_->times.size(); ++i) out.push_back(impl_->times[i] - offset_);
  return out;
}

Eigen::Index MatrixFunction::rows() const { return impl_->rows; }
Eigen::Index MatrixFunction::cols() const { return impl_->cols; }
bool MatrixFunction::is_constant() const { return impl_->kind == Impl::Kind::kConstant; }

MatrixFunction MatrixFunction::shifted(double offset) const {
  return MatrixFunction(impl_, offset_ + offset);
}

LinearSystem::LinearSystem(MatrixFunction a, MatrixFunction b, MatrixFunction c)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
  n_ = static_cast<int>(a_.rows());
  m_ = static_cast<int>(b_.cols());
  p_ = static_cast<int>(c_.rows());
  require(n_ > 0 && a_.cols() == n_, ErrorKind::kDimensionMismatch,
          "A must be square and non-empty");
  require(b_.rows() == n_, ErrorKind::kDimensionMismatch, "B must have as many rows as A");
  require(c_.cols() == n_, ErrorKind::kDimensionMismatch, "C must have as many columns as A");
}

LinearSystem::LinearSystem(MatrixFunction a, MatrixFunction b)
    : LinearSystem(a, std::move(b), MatrixFunction(Matrix::Identity(a.rows(), a.rows()))) {}

std::vector<double> LinearSystem::breakpoints_between(double a, double b) const {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  std::vector<double> out;
  for (const MatrixFunction* f : {&a_, &b_, &c_}) {
    for (double t : f->breakpoints())
      if (t > lo && t < hi) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LinearSystem LinearSystem::shifted(double offset) const {
  return LinearSystem(a_.shifted(offset), b_.shifted(offset), c_.shifted(offset));
}

namespace {

// Node lists per breakpoint-free segment, ordered in the direction from -> to.
std::vector<std::vector<double>> segments(const LinearSystem& sys, double from, double to,
                                          const IntegrationOptions& opts) {
  require(opts.steps_per_unit >= 1, ErrorKind::kInvalidArgument, "steps_per_unit must be >= 1");
  require(std::isfinite(from) && std::isfinite(to), ErrorKind::kInvalidArgument,
          "integration bounds must be finite");
  std::vector<std::vector<double>> out;
  if (from == to) return out;
  const double lo = std::min(from, to);
  const double hi = std::max(from, to);
  std::vector<double> cuts{lo};
  for (double t : sys.breakpoints_between(lo, hi)) cuts.push_back(t);
  cuts.push_back(hi);
  for (size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s];
    const double b = cuts[s + 1];
    long k = static_cast<long>(std::ceil((b - a) * opts.steps_per_unit - 1e-9));
    k = std::max(k, 2L);
    if (k % 2) ++k;
    std::vector<double> nodes(k + 1);
    for (long i = 0; i <= k; ++i) nodes[i] = a + (b - a) * static_cast<double>(i) / k;
    nodes[k] = b;
    out.push_back(std::move(nodes));
  }
  if (from > to) {
    std::reverse(out.begin(), out.end());
    for (auto& seg : out) std::reverse(seg.begin(), seg.end());
  }
  return out;
}

void check_state(const Matrix& x, double t, const char* what) {
  if (!x.allFinite()) {
    fail(ErrorKind::kNonFiniteState, std::string(what) + ": non-finite state at t = " +
                                         std::to_string(t));
  }
}

// Composite Simpson weights for an even number of uniform intervals.
double simpson_weight(size_t i, size_t k) {
  if (i == 0 || i == k) return 1.0;
  return i % 2 ? 4.0 : 2.0;
}

// Solves R y = r for a symmetric PSD R with graded scales, e.g. a Gramian over a
// short horizon, by diagonal equilibration and LDLT.
Matrix solve_scaled_spd(const Matrix& r, const Matrix& rhs) {
  const Eigen::Index n = r.rows();
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = r(i, i) > 0 ? 1.0 / std::sqrt(r(i, i)) : 1.0;
  const Matrix scaled = d.asDiagonal() * symmetrize(r) * d.asDiagonal();
  Eigen::LDLT<Matrix> ldlt(scaled);
  const Matrix z = ldlt.solve(d.asDiagonal() * rhs);
  return d.asDiagonal() * z;
}

}  // namespace

std::vector<double> integration_grid(const LinearSystem& sys, double from, double to,
                                     const IntegrationOptions& opts) {
  std::vector<double> out{from};
  for (const auto& seg : segments(sys, from, to, opts))
    out.insert(out.end(), seg.begin() + 1, seg.end());
  return out;
}

Matrix state_transition(const LinearSystem& sys, double t, double t_prime,
                        const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  Matrix x = Matrix::Identity(n, n);
  for (const auto& seg : segments(sys, t_prime, t, opts)) {
    const double lo = std::min(seg.front(), seg.back());
    const double hi = std::max(seg.front(), seg.back());
    auto rhs = [&](double s, const Matrix& v) -> Matrix { return sys.A(s, lo, hi) * v; };
    for (size_t i = 0; i + 1 < seg.size(); ++i) {
      x = rk4_step(rhs, seg[i], x, seg[i + 1] - seg[i]);
      check_state(x, seg[i + 1], "state_transition");
    }
  }
  return x;
}

Matrix controllability_gramian(const LinearSystem& sys, double t, double t_prime,
                               const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  // psi(s) = Phi(t, s) solves d/ds psi = -psi A(s) with psi(t) = I.
  Matrix psi = Matrix::Identity(n, n);
  Matrix w = Matrix::Zero(n, n);
  for (const auto& seg : segments(sys, t, t_prime, opts)) {
    const double lo = std::min(seg.front(), seg.back());
    const double hi = std::max(seg.front(), seg.back());
    const size_t k = seg.size() - 1;
    const double h = std::abs(seg[1] - seg[0]);
    auto rhs = [&](double s, const Matrix& v) -> Matrix { return -v * sys.A(s, lo, hi); };
    Matrix acc = Matrix::Zero(n, n);
    for (size_t i = 0; i <= k; ++i) {
      if (i > 0) {
        psi = rk4_step(rhs, seg[i - 1], psi, seg[i] - seg[i - 1]);
        check_state(psi, seg[i], "controllability_gramian");
      }
      const Matrix pb = psi * sys.B(seg[i], lo, hi);
      acc += simpson_weight(i, k) * (pb * pb.transpose());
    }
    w += (h / 3.0) * acc;
  }
  return symmetrize(w);
}

Matrix observability_gramian(const LinearSystem& sys, double t0, double t1,
                             const IntegrationOptions& opts) {
  require(t0 < t1, ErrorKind::kInvalidArgument, "observability_gramian requires t0 < t1");
  const int n = sys.state_dim();
  Matrix x = Matrix::Identity(n, n);
  Matrix m = Matrix::Zero(n, n);
  for (const auto& seg : segments(sys, t0, t1, opts)) {
    const double lo = seg.front();
    const double hi = seg.back();
    const size_t k = seg.size() - 1;
    const double h = seg[1] - seg[0];
    auto rhs = [&](double s, const Matrix& v) -> Matrix { return sys.A(s, lo, hi) * v; };
    Matrix acc = Matrix::Zero(n, n);
    for (size_t i = 0; i <= k; ++i) {
      if (i > 0) {
        x = rk4_step(rhs, seg[i - 1], x, seg[i] - seg[i - 1]);
        check_state(x, seg[i], "observability_gramian");
      }
      const Matrix cx = sys.C(seg[i], lo, hi) * x;
      acc += simpson_weight(i, k) * (cx.transpose() * cx);
    }
    m += (h / 3.0) * acc;
  }
  return symmetrize(m);
}

namespace {

SymmetricEigen checked_gramian_eigen(const Matrix& w) {
  require(w.rows() == w.cols(), ErrorKind::kDimensionMismatch, "Gramian must be square");
  require_finite(w, "Gramian");
  const SymmetricEigen eig = jacobi_eigen(w);
  const double largest = eig.values(eig.values.size() - 1);
  if (!(largest > 0.0) || eig.values(0) < 1e-12 * largest) {
    fail(ErrorKind::kNotControllable,
         "controllability Gramian is numerically singular (eigenvalues " +
             std::to_string(eig.values(0)) + " .. " + std::to_string(largest) + ")");
  }
  return eig;
}

}  // namespace

Matrix gramian_inverse(const Matrix& w) {
  const SymmetricEigen eig = checked_gramian_eigen(w);
  return symmetrize(eig.vectors * eig.values.cwiseInverse().asDiagonal() *
                    eig.vectors.transpose());
}

Matrix gramian_inv_sqrt(const Matrix& w) {
  const SymmetricEigen eig = checked_gramian_eigen(w);
  return symmetrize(eig.vectors * eig.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                    eig.vectors.transpose());
}

double min_energy_cost(const LinearSystem& sys, const Vector& x0, const Vector& x1, double t0,
                       double t1, const IntegrationOptions& opts) {
  require(t0 < t1, ErrorKind::kInvalidArgument, "min_energy_cost requires t0 < t1");
  require(x0.size() == sys.state_dim() && x1.size() == sys.state_dim(),
          ErrorKind::kDimensionMismatch, "endpoint dimension differs from the state dimension");
  const Matrix w_inv = gramian_inverse(controllability_gramian(sys, t1, t0, opts));
  const Vector d = x1 - state_transition(sys, t1, t0, opts) * x0;
  return std::max(0.0, d.dot(w_inv * d));
}

namespace {

// Closed-loop simulation constants; see run_closed_loop() below.
constexpr double kSwitchFraction = 0.1;
constexpr double kStopFraction = 1e-7;
constexpr double kStiffnessFactor = 0.05;
// Relative node spacing of the gain table close to t1.
constexpr double kTailResolution = 1.0 / 32.0;

}  // namespace

MinEnergyGains::MinEnergyGains(const LinearSystem& sys, double t0, double t1,
                               const IntegrationOptions& opts)
    : sys_(sys), t0_(t0), t1_(t1) {
  require(t0 < t1, ErrorKind::kInvalidArgument, "feedback horizon requires t0 < t1");
  // Reject uncontrollable horizons up front rather than at the first evaluation.
  checked_gramian_eigen(controllability_gramian(sys, t1, t0, opts));

  sim_grid_ = integration_grid(sys, t0, t1, opts);
  nodes_.reserve(2 * sim_grid_.size());
  for (size_t i = 0; i + 1 < sim_grid_.size(); ++i) {
    nodes_.push_back(sim_grid_[i]);
    nodes_.push_back(sim_grid_[i] + 0.5 * (sim_grid_[i + 1] - sim_grid_[i]));
  }
  nodes_.push_back(t1);

  // R(t) has eigenvalues down to order (t1 - t)^(2n-1); a uniform table
  // resolves them only to O((h / (t1 - t))^4) relative accuracy. Close to t1
  // the table therefore gets nodes whose spacing is proportional to the gap.
  const double h_end = t1 - nodes_[nodes_.size() - 2];
  const double g_top = std::min(h_end / kTailResolution, 0.5 * (t1 - t0));
  const double g_min = 0.5 * kStopFraction * (t1 - t0);
  for (double g = g_min * kTailResolution; g < g_top;
       g = g < g_min ? g + g_min * kTailResolution : g * (1.0 + kTailResolution)) {
    nodes_.push_back(t1 - g);
  }
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end(),
                           [&](double a, double b) {
                             return b - a <= 1e-15 * std::max({1.0, std::abs(t0), std::abs(t1)});
                           }),
               nodes_.end());
  nodes_.back() = t1;

  const int n = sys.state_dim();
  table_.resize(nodes_.size());
  Matrix z(n, 2 * n);
  z << Matrix::Identity(n, n), Matrix::Zero(n, n);
  table_.back() = z;
  for (size_t i = nodes_.size() - 1; i > 0; --i) {
    const double lo = nodes_[i - 1];
    const double hi = nodes_[i];
    auto rhs = [&](double s, const Matrix& v) -> Matrix {
      const Matrix psi = v.leftCols(n);
      const Matrix pb = psi * sys_.B(s, lo, hi);
      Matrix d(n, 2 * n);
      d << -psi * sys_.A(s, lo, hi), -pb * pb.transpose();
      return d;
    };
    z = rk4_step(rhs, hi, z, lo - hi);
    check_state(z, lo, "min_energy_control");
    table_[i - 1] = z;
  }
}

MinEnergyGains::Propagator MinEnergyGains::propagator(double t) const {
  require(std::isfinite(t) && t < t1_, ErrorKind::kInvalidArgument,
          "feedback law is undefined at or after the terminal time");
  const int n = sys_.state_dim();
  const double tol = 1e-14 * std::max({1.0, std::abs(t0_), std::abs(t1_)});
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
  size_t j = static_cast<size_t>(it - nodes_.begin());
  Matrix z;
  if (j + 1 < nodes_.size() && std::abs(nodes_[j] - t) <= tol) {
    z = table_[j];
  } else {
    j = std::min(j, nodes_.size() - 1);
    if (nodes_[j] < t) j = std::min(j + 1, nodes_.size() - 1);
    const double hi = nodes_[j];
    const double lo = j > 0 ? nodes_[j - 1] : t;
    auto rhs = [&](double s, const Matrix& v) -> Matrix {
      const Matrix psi = v.leftCols(n);
      const Matrix pb = psi * sys_.B(s, lo, hi);
      Matrix d(n, 2 * n);
      d << -psi * sys_.A(s, lo, hi), -pb * pb.transpose();
      return d;
    };
    z = rk4_step(rhs, hi, table_[j], t - hi);
  }
  return {z.leftCols(n), symmetrize(z.rightCols(n))};
}

MinEnergyGains::Gains MinEnergyGains::at(double t) const { return at(t, t, t); }

MinEnergyGains::Gains MinEnergyGains::at(double t, double lo, double hi) const {
  const Propagator p = propagator(t);
  const Matrix bt_psit = sys_.B(t, lo, hi).transpose() * p.psi.transpose();
  Gains g;
  g.feedforward = solve_scaled_spd(p.r, bt_psit.transpose()).transpose();
  g.feedback = g.feedforward * p.psi;
  return g;
}

FeedbackLaw::FeedbackLaw(std::shared_ptr<const MinEnergyGains> gains, Vector x1)
    : gains_(std::move(gains)), x1_(std::move(x1)) {
  require(x1_.size() == gains_->system().state_dim(), ErrorKind::kDimensionMismatch,
          "target dimension differs from the state dimension");
}

Vector FeedbackLaw::operator()(double t, const Vector& x) const {
  require(x.size() == x1_.size(), ErrorKind::kDimensionMismatch,
          "state dimension differs from the feedback law");
  const MinEnergyGains::Gains g = gains_->at(t);
  return g.feedforward * x1_ - g.feedback * x;
}

FeedbackLaw min_energy_control(const LinearSystem& sys, const Vector& x0, const Vector& x1,
                               double t0, double t1, const IntegrationOptions& opts) {
  require(x0.size() == sys.state_dim(), ErrorKind::kDimensionMismatch,
          "initial state dimension differs from the state dimension");
  return FeedbackLaw(std::make_shared<MinEnergyGains>(sys, t0, t1, opts), x1);
}

namespace {

// The closed loop runs in three charts.
//  1. On the state x while t < t1 - 10% of the horizon.
//  2. On the predicted terminal miss e = x1 - Phi(t1,t) x. Near t1 the gain K
//     grows like (t1 - t)^-(2n-1) and u = G x1 - K x cancels catastrophically,
//     while u = B' Psi' R^{-1} e stays accurate as long as R is well
//     conditioned after diagonal equilibration.
//  3. Once that condition number passes 1e8 (or t1 is 1e-7 of the horizon
//     away), the remaining stretch uses the costate p = Psi' R^{-1} e, which
//     is exactly what the feedback reproduces along its own trajectory:
//     p' = -A' p and u = B' p. This part is not stiff and ends at t1 itself.
// In the first two charts every step is capped at 0.05 over the spectral radius
// of the closed-loop matrix, whose eigenvalues grow like 1/(t1 - t); near t1
// that gives geometrically shrinking steps.
constexpr double kMaxMissCondition = 1e8;

std::pair<double, double> grid_cell(const std::vector<double>& grid, double t) {
  auto it = std::upper_bound(grid.begin(), grid.end(), t);
  const size_t hi = std::min(static_cast<size_t>(it - grid.begin()), grid.size() - 1);
  return {grid[hi > 0 ? hi - 1 : 0], grid[hi]};
}

double spectral_radius(const Matrix& m) {
  return Eigen::EigenSolver<Matrix>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

double equilibrated_condition(const Matrix& r) {
  Vector d = r.diagonal();
  if ((d.array() <= 0.0).any()) return INFINITY;
  d = d.cwiseSqrt().cwiseInverse();
  const SymmetricEigen eig = jacobi_eigen(d.asDiagonal() * r * d.asDiagonal());
  if (!(eig.values(0) > 0.0)) return INFINITY;
  return eig.values(eig.values.size() - 1) / eig.values(0);
}

// RK4 from `from` towards `to` on the grid with the stiffness cap. Stops early,
// before a step, once `done(t)` holds. Returns the time reached.
template <class Rhs, class Rate, class Done, class Visit>
double march(const std::vector<double>& grid, double from, double to, Matrix* z, Rhs&& rhs,
             Rate&& rate, Done&& done, Visit&& visit) {
  double cur = from;
  size_t next = static_cast<size_t>(std::upper_bound(grid.begin(), grid.end(), cur) - grid.begin());
  const double snap = 1e-15 * std::max(1.0, std::abs(to));
  while (to - cur > snap && !done(cur)) {
    while (next < grid.size() && grid[next] <= cur) ++next;
    const double node = next < grid.size() ? grid[next] : to;
    double h = std::min(node - cur, to - cur);
    h = std::min(h, kStiffnessFactor / std::max(rate(cur), 1e-300));
    *z = rk4_step(rhs, cur, *z, h);
    double reached = cur + h;
    if (std::abs(node - reached) <= snap) reached = node;
    if (std::abs(to - reached) <= snap) reached = to;
    check_state(*z, reached, "closed-loop simulation");
    cur = reached;
    visit(cur);
  }
  return cur;
}

// Closed-loop flow of the columns of x0 towards the matching columns of x1 up
// to t_end. visit(t, x, u) sees every step; returns x(t_end). `energy` gets the
// column-wise integral of |u|^2.
template <class Visit>
Matrix run_closed_loop(const MinEnergyGains& gains, const Matrix& x0, const Matrix& x1,
                       double t_end, Visit&& visit, Eigen::RowVectorXd* energy) {
  const LinearSystem& sys = gains.system();
  const int n = sys.state_dim();
  const Eigen::Index k = x0.cols();
  const std::vector<double>& grid = gains.simulation_grid();
  const double span = gains.t1() - gains.t0();
  const double t_switch = gains.t1() - kSwitchFraction * span;
  const double t_stop = gains.t1() - kStopFraction * span;
  auto no_stop = [](double) { return false; };

  // Chart 1: Z = [x; energy].
  Matrix z(n + 1, k);
  z << x0, Eigen::RowVectorXd::Zero(k);
  auto state_rhs = [&](double t, const Matrix& v) -> Matrix {
    const auto [lo, hi] = grid_cell(grid, t);
    const MinEnergyGains::Gains g = gains.at(t, lo, hi);
    const Matrix u = g.feedforward * x1 - g.feedback * v.topRows(n);
    Matrix d(n + 1, k);
    d << sys.A(t, lo, hi) * v.topRows(n) + sys.B(t, lo, hi) * u, u.colwise().squaredNorm();
    return d;
  };
  auto state_rate = [&](double t) {
    const auto [lo, hi] = grid_cell(grid, t);
    return spectral_radius(sys.A(t, lo, hi) - sys.B(t, lo, hi) * gains.at(t, lo, hi).feedback);
  };
  auto state_visit = [&](double t) {
    const auto [lo, hi] = grid_cell(grid, t);
    if (t >= gains.t1()) return;
    const MinEnergyGains::Gains g = gains.at(t, lo, hi);
    const Matrix x = z.topRows(n);
    visit(t, x, Matrix(g.feedforward * x1 - g.feedback * x));
  };
  double cur = march(grid, gains.t0(), std::min(t_end, t_switch), &z, state_rhs, state_rate,
                     no_stop, state_visit);
  if (cur >= t_end) {
    *energy = z.row(n);
    return z.topRows(n);
  }

  // Chart 2: Z = [e; energy].
  z.topRows(n) = x1 - gains.propagator(cur).psi * z.topRows(n);
  auto miss_control = [&](double t, double lo, double hi, const MinEnergyGains::Propagator& p,
                          const Matrix& e) -> Matrix {
    return sys.B(t, lo, hi).transpose() * p.psi.transpose() * solve_scaled_spd(p.r, e);
  };
  auto miss_rhs = [&](double t, const Matrix& v) -> Matrix {
    const auto [lo, hi] = grid_cell(grid, t);
    const MinEnergyGains::Propagator p = gains.propagator(t);
    const Matrix u = miss_control(t, lo, hi, p, v.topRows(n));
    Matrix d(n + 1, k);
    d << -p.psi * sys.B(t, lo, hi) * u, u.colwise().squaredNorm();
    return d;
  };
  auto miss_rate = [&](double t) {
    const auto [lo, hi] = grid_cell(grid, t);
    const MinEnergyGains::Propagator p = gains.propagator(t);
    const Matrix pb = p.psi * sys.B(t, lo, hi);
    return spectral_radius(solve_scaled_spd(p.r, pb * pb.transpose()));
  };
  auto ill_conditioned = [&](double t) {
    return t >= t_stop || equilibrated_condition(gains.propagator(t).r) > kMaxMissCondition;
  };
  auto miss_visit = [&](double t) {
    if (t >= gains.t1()) return;
    const auto [lo, hi] = grid_cell(grid, t);
    const MinEnergyGains::Propagator p = gains.propagator(t);
    const Matrix e = z.topRows(n);
    visit(t, Matrix(p.psi.partialPivLu().solve(x1 - e)), miss_control(t, lo, hi, p, e));
  };
  cur = march(grid, cur, t_end, &z, miss_rhs, miss_rate, ill_conditioned, miss_visit);
  const MinEnergyGains::Propagator p = gains.propagator(cur);
  if (cur >= t_end) {
    *energy = z.row(n);
    return p.psi.partialPivLu().solve(x1 - z.topRows(n));
  }

  // Chart 3: Z = [x; p; energy].
  Matrix w(2 * n + 1, k);
  w << p.psi.partialPivLu().solve(x1 - z.topRows(n)),
      p.psi.transpose() * solve_scaled_spd(p.r, z.topRows(n)), z.row(n);
  auto costate_rhs = [&](double t, const Matrix& v) -> Matrix {
    const auto [lo, hi] = grid_cell(grid, t);
    const Matrix a = sys.A(t, lo, hi);
    const Matrix b = sys.B(t, lo, hi);
    const Matrix u = b.transpose() * v.middleRows(n, n);
    Matrix d(2 * n + 1, k);
    d << a * v.topRows(n) + b * u, -a.transpose() * v.middleRows(n, n), u.colwise().squaredNorm();
    return d;
  };
  // The remaining stretch may be shorter than a grid cell; take at least a few
  // steps across it.
  const double rest = t_end - cur;
  auto costate_rate = [&](double) { return kStiffnessFactor * 8.0 / rest; };
  auto costate_visit = [&](double t) {
    const auto [lo, hi] = grid_cell(grid, t);
    visit(t, Matrix(w.topRows(n)),
          Matrix(sys.B(t, lo, hi).transpose() * w.middleRows(n, n)));
  };
  march(grid, cur, t_end, &w, costate_rhs, costate_rate, no_stop, costate_visit);
  *energy = w.row(2 * n);
  return w.topRows(n);
}

}  // namespace

ClosedLoopTrajectory simulate_closed_loop(const FeedbackLaw& law, const Vector& x0) {
  const MinEnergyGains& gains = law.gains();
  const int n = gains.system().state_dim();
  require(x0.size() == n, ErrorKind::kDimensionMismatch,
          "initial state dimension differs from the state dimension");
  ClosedLoopTrajectory out;
  out.times.push_back(gains.t0());
  out.states.push_back(x0);
  out.controls.push_back(law(gains.t0(), x0));
  Eigen::RowVectorXd energy;
  run_closed_loop(
      gains, x0, law.target(), gains.t1(),
      [&](double t, const Matrix& x, const Matrix& u) {
        out.times.push_back(t);
        out.states.push_back(x.col(0));
        out.controls.push_back(u.col(0));
      },
      &energy);
  out.energy = energy(0);
  return out;
}

Matrix closed_loop_flow(const MinEnergyGains& gains, double t) {
  require(t >= gains.t0() && t <= gains.t1(), ErrorKind::kInvalidArgument,
          "closed_loop_flow: time outside the horizon");
  const int n = gains.system().state_dim();
  // Columns of [P | Q] are the flows of (x0, x1) = (e_i, 0) and (0, e_i).
  Matrix x0(n, 2 * n), x1(n, 2 * n);
  x0 << Matrix::Identity(n, n), Matrix::Zero(n, n);
  x1 << Matrix::Zero(n, n), Matrix::Identity(n, n);
  if (t == gains.t0()) return x0;
  Eigen::RowVectorXd energy;
  return run_closed_loop(gains, x0, x1, t, [](double, const Matrix&, const Matrix&) {}, &energy);
}

double expected_min_energy_gaussian(const LinearSystem& sys, const Vector& m0, const Matrix& s0,
                                    const Vector& m1, const Matrix& s1, const Matrix& s01,
                                    double t0, double t1, const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  require(m0.size() == n && m1.size() == n && s0.rows() == n && s0.cols() == n &&
              s1.rows() == n && s1.cols() == n && s01.rows() == n && s01.cols() == n,
          ErrorKind::kDimensionMismatch, "Gaussian moments must match the state dimension");
  require(t0 < t1, ErrorKind::kInvalidArgument, "expected_min_energy_gaussian requires t0 < t1");
  Matrix joint(2 * n, 2 * n);
  joint << s0, s01, s01.transpose(), s1;
  const SymmetricEigen eig = jacobi_eigen(symmetrize(joint));
  if (max_asymmetry(s0) > 1e-10 || max_asymmetry(s1) > 1e-10) {
    fail(ErrorKind::kNotSymmetric, "covariances must be symmetric");
  }
  if (eig.values(0) < -1e-10 * std::max(1.0, eig.values(2 * n - 1))) {
    fail(ErrorKind::kNotPsd, "joint covariance is not positive semidefinite");
  }
  const Matrix w_inv = gramian_inverse(controllability_gramian(sys, t0, t1, opts));
  const Matrix phi = state_transition(sys, t0, t1, opts);
  const Matrix e0 = s0 + m0 * m0.transpose();
  const Matrix e01 = s01 + m0 * m1.transpose();
  const Matrix e1 = s1 + m1 * m1.transpose();
  return (w_inv * e0).trace() - 2.0 * (phi.transpose() * w_inv * e01).trace() +
         (phi.transpose() * w_inv * phi * e1).trace();
}

Matrix observability_matrix(const Matrix& a, const Matrix& c) {
  require(a.rows() == a.cols(), ErrorKind::kDimensionMismatch, "A must be square");
  require(c.cols() == a.rows(), ErrorKind::kDimensionMismatch, "C must have as many columns as A");
  const Eigen::Index n = a.rows();
  const Eigen::Index p = c.rows();
  Matrix o(n * p, n);
  Matrix block = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    o.middleRows(k * p, p) = block;
    block = block * a;
  }
  return o;
}

bool is_observable_pair(const Matrix& a, const Matrix& c) {
  return matrix_rank(observability_matrix(a, c), 1e-10) == a.rows();
}

}  // namespace ensot
