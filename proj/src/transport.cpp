#include "ensot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace ensot {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kBalanceTol = 1e-8;
constexpr double kPerturbation = 1e-11;
// Problems with at most this many cells use Bland's rule; larger ones use
// block pricing, which is anti-cycling thanks to the perturbation.
constexpr long kBlandCells = 4096;

void check_cost(const Matrix& cost, Eigen::Index ns, Eigen::Index nt) {
  require(cost.rows() == ns && cost.cols() == nt, ErrorKind::kDimensionMismatch,
          "cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
              ", expected " + std::to_string(ns) + "x" + std::to_string(nt));
  require_finite(cost, "cost matrix");
  require(cost.minCoeff() >= 0.0, ErrorKind::kInvalidArgument, "costs must be nonnegative");
}

// Spanning-tree basis of the bipartite transportation graph. Node r < ns is
// source r, node ns + c is target c.
class TransportationSimplex {
 public:
  TransportationSimplex(const Vector& supply, const Vector& demand, const Matrix& cost)
      : ns_(static_cast<int>(supply.size())),
        nt_(static_cast<int>(demand.size())),
        n_(ns_ + nt_),
        cost_(cost),
        supply_(supply),
        demand_(demand) {}

  TransportResult solve() {
    Vector a = supply_.array() + kPerturbation;
    Vector b = demand_;
    b(nt_ - 1) += ns_ * kPerturbation;
    northwest_corner(a, b);
    refresh_tree();

    const long cells = static_cast<long>(ns_) * nt_;
    const long max_pivots = 10 * cells;
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    tol_ = 1e-12 * scale;
    block_ = std::max<long>(n_, static_cast<long>(std::ceil(std::sqrt(double(cells)))));
    long pivots = 0;
    while (true) {
      int i = -1, j = -1;
      const bool found = cells <= kBlandCells ? price_bland(&i, &j) : price_block(&i, &j);
      if (!found) break;
      if (++pivots > max_pivots) {
        fail(ErrorKind::kNoConvergence,
             "transportation simplex exceeded " + std::to_string(max_pivots) + " pivots");
      }
      pivot(i, j);
      refresh_tree();
    }

    // The optimal basis is also primal feasible for the unperturbed marginals;
    // re-solve its tree flows exactly and drop round-off.
    tree_flows(supply_, demand_);
    TransportResult out;
    out.plan = Matrix::Zero(ns_, nt_);
    for (int e = 0; e < n_ - 1; ++e) {
      out.plan(row_[e], col_[e]) += std::max(0.0, flow_[e]);
    }
    out.value = (out.plan.array() * cost_.array()).sum();
    out.u = pot_.head(ns_);
    out.v = pot_.tail(nt_);
    out.pivots = pivots;
    return out;
  }

 private:
  void add_edge(int r, int c, double f) {
    const int e = static_cast<int>(row_.size());
    row_.push_back(r);
    col_.push_back(c);
    flow_.push_back(f);
    adj_[r].push_back(e);
    adj_[ns_ + c].push_back(e);
  }

  void northwest_corner(Vector a, Vector b) {
    adj_.assign(n_, {});
    int i = 0, j = 0;
    while (true) {
      const double x = std::min(a(i), b(j));
      add_edge(i, j, x);
      a(i) -= x;
      b(j) -= x;
      if (i == ns_ - 1 && j == nt_ - 1) break;
      if (i == ns_ - 1) {
        ++j;
      } else if (j == nt_ - 1) {
        ++i;
      } else if (a(i) <= b(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  int other(int e, int node) const { return node < ns_ ? ns_ + col_[e] : row_[e]; }

  // BFS from source 0: parents, depths, visiting order and dual potentials.
  void refresh_tree() {
    parent_.assign(n_, -1);
    parent_edge_.assign(n_, -1);
    depth_.assign(n_, -1);
    order_.clear();
    pot_ = Vector::Zero(n_);
    depth_[0] = 0;
    order_.push_back(0);
    for (size_t k = 0; k < order_.size(); ++k) {
      const int x = order_[k];
      for (int e : adj_[x]) {
        const int y = other(e, x);
        if (depth_[y] >= 0) continue;
        depth_[y] = depth_[x] + 1;
        parent_[y] = x;
        parent_edge_[y] = e;
        pot_(y) = cost_(row_[e], col_[e]) - pot_(x);
        order_.push_back(y);
      }
    }
    if (static_cast<int>(order_.size()) != n_) {
      fail(ErrorKind::kNoConvergence, "transportation basis lost connectivity");
    }
  }

  double reduced(int i, int j) const { return cost_(i, j) - pot_(i) - pot_(ns_ + j); }

  bool price_bland(int* bi, int* bj) const {
    for (int i = 0; i < ns_; ++i) {
      for (int j = 0; j < nt_; ++j) {
        if (reduced(i, j) < -tol_) {
          *bi = i;
          *bj = j;
          return true;
        }
      }
    }
    return false;
  }

  bool price_block(int* bi, int* bj) {
    const long cells = static_cast<long>(ns_) * nt_;
    double best = -tol_;
    long best_cell = -1;
    long scanned = 0, in_block = 0;
    while (scanned < cells) {
      const int i = static_cast<int>(cursor_ / nt_);
      const int j = static_cast<int>(cursor_ % nt_);
      const double d = reduced(i, j);
      if (d < best) {
        best = d;
        best_cell = cursor_;
      }
      cursor_ = (cursor_ + 1) % cells;
      ++scanned;
      if (++in_block == block_) {
        if (best_cell >= 0) break;
        in_block = 0;
      }
    }
    if (best_cell < 0) return false;
    *bi = static_cast<int>(best_cell / nt_);
    *bj = static_cast<int>(best_cell % nt_);
    return true;
  }

  void pivot(int i, int j) {
    // Tree path from target j back to source i; its edges alternate -, +, ...
    std::vector<int> up_from_target, up_from_source;
    int x = ns_ + j, y = i;
    while (x != y) {
      if (depth_[x] >= depth_[y]) {
        up_from_target.push_back(parent_edge_[x]);
        x = parent_[x];
      } else {
        up_from_source.push_back(parent_edge_[y]);
        y = parent_[y];
      }
    }
    std::vector<int> path = up_from_target;
    path.insert(path.end(), up_from_source.rbegin(), up_from_source.rend());

    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < path.size(); k += 2) {
      const int e = path[k];
      const bool better =
          flow_[e] < theta ||
          (flow_[e] == theta && std::make_pair(row_[e], col_[e]) <
                                    std::make_pair(row_[leave], col_[leave]));
      if (better) {
        theta = flow_[e];
        leave = e;
      }
    }
    theta = std::max(theta, 0.0);
    for (size_t k = 0; k < path.size(); ++k) {
      flow_[path[k]] += (k % 2 == 0) ? -theta : theta;
    }

    auto unlink = [this](int node, int e) {
      auto& list = adj_[node];
      list.erase(std::find(list.begin(), list.end(), e));
    };
    unlink(row_[leave], leave);
    unlink(ns_ + col_[leave], leave);
    row_[leave] = i;
    col_[leave] = j;
    flow_[leave] = theta;
    adj_[i].push_back(leave);
    adj_[ns_ + j].push_back(leave);
  }

  void tree_flows(const Vector& a, const Vector& b) {
    Vector net(n_);
    net.head(ns_) = a;
    net.tail(nt_) = -b;
    for (int k = n_ - 1; k >= 1; --k) {
      const int x = order_[k];
      const int e = parent_edge_[x];
      flow_[e] = x < ns_ ? net(x) : -net(x);
      net(parent_[x]) += net(x);
    }
  }

  const int ns_, nt_, n_;
  const RowMajor cost_;
  const Vector supply_, demand_;
  std::vector<int> row_, col_;
  std::vector<double> flow_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> parent_, parent_edge_, depth_, order_;
  Vector pot_;
  double tol_ = 0.0;
  long block_ = 1;
  long cursor_ = 0;
};

bool is_uniform(const Vector& w) {
  return (w.array() - w(0)).abs().maxCoeff() <= 1e-12;
}

double permutation_optimum(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, perm[i]);
    best = std::min(best, total / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Minimum over every basic solution: each choice of n_s + n_t - 1 cells whose
// marginal constraints have full column rank and a nonnegative solution.
double vertex_optimum(const Vector& a, const Vector& b, const Matrix& cost) {
  const int ns = static_cast<int>(a.size()), nt = static_cast<int>(b.size());
  const int cells = ns * nt, k = ns + nt - 1;
  Vector rhs(ns + nt);
  rhs << a, b;
  std::vector<bool> pick(cells, false);
  std::fill(pick.begin(), pick.begin() + k, true);
  double best = std::numeric_limits<double>::infinity();
  do {
    Matrix m = Matrix::Zero(ns + nt, k);
    std::vector<int> chosen;
    for (int c = 0; c < cells; ++c) {
      if (!pick[c]) continue;
      const int col = static_cast<int>(chosen.size());
      m(c / nt, col) = 1.0;
      m(ns + c % nt, col) = 1.0;
      chosen.push_back(c);
    }
    Eigen::FullPivLU<Matrix> lu(m);
    if (lu.rank() < k) continue;
    const Vector x = lu.solve(rhs);
    if ((m * x - rhs).cwiseAbs().maxCoeff() > 1e-12 || x.minCoeff() < -1e-13) continue;
    double total = 0.0;
    for (int col = 0; col < k; ++col) {
      total += cost(chosen[col] / nt, chosen[col] % nt) * std::max(0.0, x(col));
    }
    best = std::min(best, total);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TransportResult solve_transport(const Vector& supply, const Vector& demand, const Matrix& cost) {
  require(supply.size() >= 1 && demand.size() >= 1, ErrorKind::kInvalidArgument,
          "marginals must be nonempty");
  check_cost(cost, supply.size(), demand.size());
  require_finite(supply, "supply");
  require_finite(demand, "demand");
  require(supply.minCoeff() >= 0.0 && demand.minCoeff() >= 0.0, ErrorKind::kInvalidArgument,
          "marginals must be nonnegative");
  const double gap = supply.sum() - demand.sum();
  if (std::abs(gap) > kBalanceTol) {
    fail(ErrorKind::kUnbalanced, "marginal totals differ by " + std::to_string(gap));
  }
  Vector balanced = demand;
  if (demand.sum() > 0.0) balanced *= supply.sum() / demand.sum();
  return TransportationSimplex(supply, balanced, cost).solve();
}

TransportResult solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const Matrix& cost) {
  return solve_transport(mu.weights(), nu.weights(), cost);
}

double brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost) {
  check_cost(cost, mu.size(), nu.size());
  if (mu.size() == nu.size() && mu.size() <= 6 && is_uniform(mu.weights()) &&
      is_uniform(nu.weights())) {
    return permutation_optimum(cost);
  }
  if (mu.size() <= 4 && nu.size() <= 4) {
    return vertex_optimum(mu.weights(), nu.weights(), cost);
  }
  fail(ErrorKind::kTooLarge, "brute_force_ot supports uniform n x n with n <= 6 or at most "
                             "4 atoms per side");
}

Matrix distance_cost(const Matrix& source_atoms, const Matrix& target_atoms, double p) {
  require(source_atoms.rows() == target_atoms.rows(), ErrorKind::kDimensionMismatch,
          "atoms live in different dimensions");
  Matrix c(source_atoms.cols(), target_atoms.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double d = (source_atoms.col(i) - target_atoms.col(j)).norm();
      c(i, j) = p == 2.0 ? d * d : std::pow(d, p);
    }
  }
  return c;
}

double wasserstein_p(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p) {
  require(p >= 1.0, ErrorKind::kInvalidArgument, "Wasserstein order must be >= 1");
  const TransportResult r = solve_kantorovich(mu, nu, distance_cost(mu.atoms(), nu.atoms(), p));
  return std::pow(std::max(0.0, r.value), 1.0 / p);
}

Matrix lqr_cost_matrix(const LinearSystem& sys, double t0, double t1,
                       const Matrix& source_atoms, const Matrix& target_atoms,
                       const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  require(source_atoms.rows() == n && target_atoms.rows() == n, ErrorKind::kDimensionMismatch,
          "atoms must have the state dimension");
  const Matrix phi = state_transition(sys, t1, t0, opts);
  const Matrix l = gramian_inv_sqrt(controllability_gramian(sys, t1, t0, opts));
  const Matrix from = l * phi * source_atoms;
  const Matrix to = l * target_atoms;
  return 0.5 * distance_cost(from, to, 2.0);
}

double transformed_w2(const LinearSystem& sys, const DiscreteMeasure& mu0,
                      const DiscreteMeasure& mu1, double t0, double t1,
                      const IntegrationOptions& opts) {
  const int n = sys.state_dim();
  require(mu0.dim() == n && mu1.dim() == n, ErrorKind::kDimensionMismatch,
          "measures must live in the state space");
  const Matrix phi = state_transition(sys, t1, t0, opts);
  const Matrix l = gramian_inv_sqrt(controllability_gramian(sys, t1, t0, opts));
  const DiscreteMeasure hat0 = pushforward_linear(mu0, l * phi);
  const DiscreteMeasure hat1 = pushforward_linear(mu1, l);
  return solve_kantorovich(hat0, hat1, distance_cost(hat0.atoms(), hat1.atoms(), 2.0)).value;
}

}  // namespace ensot
