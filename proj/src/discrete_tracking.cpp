#include "ensot/discrete_tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "ensot/transport.hpp"

namespace ensot {

namespace {

constexpr double kPlanThreshold = 1e-14;

void validate(const TrackingProblem& p) {
  require(p.outputs.size() >= 2, ErrorKind::kInvalidArgument,
          "tracking needs outputs at two or more times");
  require(p.grid.dim() == p.system.state_dim(), ErrorKind::kDimensionMismatch,
          "grid dimension differs from the state dimension");
  for (size_t k = 0; k < p.outputs.size(); ++k) {
    require(p.outputs[k].dim() == p.system.C(static_cast<double>(k)).rows(),
            ErrorKind::kDimensionMismatch,
            "output measure " + std::to_string(k) + " does not match C(k)");
  }
}

std::vector<int> positive_nodes(const BinConstraints& bins) {
  std::vector<int> out;
  for (size_t i = 0; i < bins.bin_of_node.size(); ++i)
    if (bins.mass(bins.bin_of_node[i]) > 0.0) out.push_back(static_cast<int>(i));
  return out;
}

Matrix columns(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(m.rows(), idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out.col(k) = m.col(idx[k]);
  return out;
}

TrackingSolution solve_fixed(const TrackingProblem& p, const Matrix& nodes,
                             const std::vector<BinConstraints>& bins) {
  const int steps = static_cast<int>(bins.size());
  const long d = nodes.cols();
  TrackingSolution sol;
  sol.nodes = nodes;
  sol.mode = TrackingMode::kFixedMarginal;
  for (const auto& b : bins) {
    Vector m = Vector::Zero(d);
    for (long i = 0; i < d; ++i) {
      const int bin = b.bin_of_node[i];
      m(i) = b.mass(bin) / static_cast<double>(b.nodes_of_bin[bin].size());
    }
    sol.marginals.push_back(m);
  }
  for (int k = 0; k + 1 < steps; ++k) {
    const std::vector<int> from = positive_nodes(bins[k]), to = positive_nodes(bins[k + 1]);
    Vector a(from.size()), b(to.size());
    for (size_t i = 0; i < from.size(); ++i) a(i) = sol.marginals[k](from[i]);
    for (size_t j = 0; j < to.size(); ++j) b(j) = sol.marginals[k + 1](to[j]);
    const Matrix cost = lqr_cost_matrix(p.system, k, k + 1, columns(nodes, from),
                                        columns(nodes, to), p.integration);
    const TransportResult r = solve_transport(a, b, cost);
    Matrix plan = Matrix::Zero(d, d);
    for (size_t i = 0; i < from.size(); ++i)
      for (size_t j = 0; j < to.size(); ++j) plan(from[i], to[j]) = r.plan(i, j);
    sol.plans.push_back(std::move(plan));
    sol.objective += r.value;
  }
  return sol;
}

// Variables are the plan entries between nodes of positive-mass bins; node
// marginals are eliminated: bin totals are imposed on outgoing mass (incoming
// at the final time) and consecutive plans are chained node by node.
TrackingSolution solve_coupled(const TrackingProblem& p, const Matrix& nodes,
                               const std::vector<BinConstraints>& bins) {
  const int steps = static_cast<int>(bins.size());
  const int intervals = steps - 1;
  const long d = nodes.cols();
  std::vector<std::vector<int>> active(steps);
  for (int k = 0; k < steps; ++k) active[k] = positive_nodes(bins[k]);

  // Row numbering.
  std::vector<std::vector<int>> bin_row(steps), chain_row(steps);
  int rows = 0;
  for (int k = 0; k < steps; ++k) {
    bin_row[k].assign(bins[k].mass.size(), -1);
    for (int b = 0; b < bins[k].mass.size(); ++b)
      if (bins[k].mass(b) > 0.0) bin_row[k][b] = rows++;
  }
  for (int k = 1; k < intervals; ++k) {
    chain_row[k].assign(d, -1);
    for (int i : active[k]) chain_row[k][i] = rows++;
  }
  LinearProgram lp(rows);
  for (int k = 0; k < steps; ++k) {
    for (int b = 0; b < bins[k].mass.size(); ++b) {
      if (bin_row[k][b] < 0) continue;
      lp.set_rhs(bin_row[k][b], bins[k].mass(b));
      lp.set_row_label(bin_row[k][b], "output bin " + std::to_string(b) + " at time " +
                                          std::to_string(k));
    }
  }
  for (int k = 1; k < intervals; ++k)
    for (int i : active[k])
      lp.set_row_label(chain_row[k][i], "marginal chaining at node " + std::to_string(i) +
                                            ", time " + std::to_string(k));

  struct Var {
    int k, i, j;
  };
  std::vector<Var> vars;
  for (int k = 0; k < intervals; ++k) {
    const Matrix cost = lqr_cost_matrix(p.system, k, k + 1, columns(nodes, active[k]),
                                        columns(nodes, active[k + 1]), p.integration);
    for (size_t a = 0; a < active[k].size(); ++a) {
      const int i = active[k][a];
      for (size_t b = 0; b < active[k + 1].size(); ++b) {
        const int j = active[k + 1][b];
        std::vector<std::pair<int, double>> col;
        col.emplace_back(bin_row[k][bins[k].bin_of_node[i]], 1.0);
        if (k > 0) col.emplace_back(chain_row[k][i], -1.0);
        if (k + 1 < intervals) {
          col.emplace_back(chain_row[k + 1][j], 1.0);
        } else {
          col.emplace_back(bin_row[k + 1][bins[k + 1].bin_of_node[j]], 1.0);
        }
        lp.add_variable(cost(a, b), std::move(col));
        vars.push_back({k, i, j});
      }
    }
  }
  const LpSolution x = solve_lp(lp, p.lp);

  TrackingSolution sol;
  sol.nodes = nodes;
  sol.mode = TrackingMode::kCoupled;
  sol.plans.assign(intervals, Matrix::Zero(d, d));
  for (size_t v = 0; v < vars.size(); ++v) sol.plans[vars[v].k](vars[v].i, vars[v].j) = x.x(v);
  for (int k = 0; k < intervals; ++k) sol.marginals.push_back(sol.plans[k].rowwise().sum());
  sol.marginals.push_back(sol.plans.back().colwise().sum().transpose());
  sol.objective = x.value;
  return sol;
}

}  // namespace

DiscreteMeasure TrackingSolution::marginal(int k) const {
  require(k >= 0 && k < static_cast<int>(marginals.size()), ErrorKind::kInvalidArgument,
          "marginal index out of range");
  return DiscreteMeasure::from_unnormalized(nodes, marginals[k].cwiseMax(0.0));
}

BinConstraints output_bin_constraints(const LinearSystem& sys, int k, const Grid& grid,
                                      const DiscreteMeasure& mu_k) {
  const Matrix c = sys.C(k);
  require(grid.dim() == sys.state_dim(), ErrorKind::kDimensionMismatch,
          "grid dimension differs from the state dimension");
  require(mu_k.dim() == c.rows(), ErrorKind::kDimensionMismatch,
          "output measure dimension differs from C(k)");
  const Matrix outputs = c * grid.nodes();
  BinConstraints out;
  out.mass = mu_k.weights();
  out.nodes_of_bin.assign(mu_k.size(), {});
  out.bin_of_node.resize(outputs.cols());
  for (Eigen::Index i = 0; i < outputs.cols(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int b = 0; b < mu_k.size(); ++b) {
      const double dist = (outputs.col(i) - mu_k.atoms().col(b)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = b;
      }
    }
    out.bin_of_node[i] = best;
    out.nodes_of_bin[best].push_back(static_cast<int>(i));
  }
  for (int b = 0; b < mu_k.size(); ++b) {
    if (out.nodes_of_bin[b].empty()) {
      fail(ErrorKind::kEmptyBin, "output atom " + std::to_string(b) + " at time " +
                                     std::to_string(k) + " receives no grid node");
    }
  }
  return out;
}

TrackingSolution solve_tracking(const TrackingProblem& problem) {
  validate(problem);
  const Matrix nodes = problem.grid.nodes();
  std::vector<BinConstraints> bins;
  for (size_t k = 0; k < problem.outputs.size(); ++k) {
    bins.push_back(output_bin_constraints(problem.system, static_cast<int>(k), problem.grid,
                                          problem.outputs[k]));
  }
  if (problem.mode == TrackingMode::kFixedMarginal) return solve_fixed(problem, nodes, bins);
  return solve_coupled(problem, nodes, bins);
}

DiscreteMeasure displacement_interpolate(const TrackingSolution& solution,
                                         const LinearSystem& sys, double t,
                                         const IntegrationOptions& opts) {
  const int intervals = solution.intervals();
  require(std::isfinite(t) && t >= 0.0 && t <= intervals, ErrorKind::kInvalidArgument,
          "interpolation time outside the tracked horizon");
  require(sys.state_dim() == solution.nodes.rows(), ErrorKind::kDimensionMismatch,
          "system does not match the solution grid");
  const int k = std::min(static_cast<int>(std::floor(t)), intervals - 1);
  const Matrix& plan = solution.plans[k];
  const Matrix& z = solution.nodes;
  const int n = sys.state_dim();

  // Endpoints are the grid nodes themselves; in between, x(t) = P z_i + Q z_j
  // from the closed-loop flow of the minimum-energy feedback.
  Matrix p_mat = Matrix::Identity(n, n), q_mat = Matrix::Zero(n, n);
  if (t == k + 1) {
    p_mat.setZero();
    q_mat.setIdentity();
  } else if (t > k) {
    const MinEnergyGains gains(sys, k, k + 1, opts);
    const Matrix flow = closed_loop_flow(gains, t);
    p_mat = flow.leftCols(n);
    q_mat = flow.rightCols(n);
  }
  const Matrix from = p_mat * z, to = q_mat * z;
  std::vector<std::pair<int, int>> entries;
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j)
      if (plan(i, j) > kPlanThreshold)
        entries.emplace_back(static_cast<int>(i), static_cast<int>(j));
  require(!entries.empty(), ErrorKind::kZeroMass, "transport plan is empty");
  Matrix atoms(n, entries.size());
  Vector weights(entries.size());
  for (size_t e = 0; e < entries.size(); ++e) {
    atoms.col(e) = from.col(entries[e].first) + to.col(entries[e].second);
    weights(e) = plan(entries[e].first, entries[e].second);
  }
  return DiscreteMeasure::from_unnormalized(atoms, weights);
}

}  // namespace ensot
