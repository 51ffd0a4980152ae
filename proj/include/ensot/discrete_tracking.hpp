#pragma once

#include <vector>

#include "ensot/lp.hpp"
#include "ensot/lti.hpp"
#include "ensot/measures.hpp"

namespace ensot {

enum class TrackingMode {
  kCoupled,        // one LP over all plans; node marginals are free inside bins
  kFixedMarginal,  // bin mass spread uniformly over its nodes, then T transports
};

/// Output measures mu_k observed at integer times k = 0..T through y = C(k) x.
/// Bins are the Voronoi cells of the output atoms, so atoms of zero weight
/// still carve out (empty-mass) bins.
struct TrackingProblem {
  LinearSystem system;
  std::vector<DiscreteMeasure> outputs;
  Grid grid;
  TrackingMode mode = TrackingMode::kCoupled;
  IntegrationOptions integration;
  LpOptions lp;
};

struct TrackingSolution {
  Matrix nodes;                 // n x d grid nodes
  std::vector<Vector> marginals;  // d weights per time k = 0..T
  std::vector<Matrix> plans;    // d x d per interval k = 0..T-1
  double objective = 0.0;       // sum of 1/2-energy transport costs
  TrackingMode mode = TrackingMode::kCoupled;

  int intervals() const { return static_cast<int>(plans.size()); }
  DiscreteMeasure marginal(int k) const;
};

/// Assignment of grid nodes to output atoms: node i belongs to the atom
/// nearest to C(k) z_i (ties to the lowest atom index).
struct BinConstraints {
  std::vector<int> bin_of_node;
  std::vector<std::vector<int>> nodes_of_bin;
  Vector mass;  // mu_k weight of each bin
};

/// kEmptyBin when some output atom attracts no grid node.
BinConstraints output_bin_constraints(const LinearSystem& sys, int k, const Grid& grid,
                                      const DiscreteMeasure& mu_k);

/// kInfeasible, kNoConvergence, kNotControllable.
TrackingSolution solve_tracking(const TrackingProblem& problem);

/// Measure at time t in [k, k+1]: each plan entry above 1e-14 moves its mass
/// along the closed-loop minimum-energy trajectory from (z_i, k) to (z_j, k+1).
DiscreteMeasure displacement_interpolate(const TrackingSolution& solution,
                                         const LinearSystem& sys, double t,
                                         const IntegrationOptions& opts = {});

}  // namespace ensot
