#pragma once

#include "ensot/lti.hpp"
#include "ensot/measures.hpp"

namespace ensot {

/// Optimal coupling of a transportation problem. `u`, `v` are the dual
/// potentials of the final basis: c_ij - u_i - v_j >= 0 everywhere, with
/// equality on the support of the plan.
struct TransportResult {
  Matrix plan;  // n_source x n_target
  double value = 0.0;
  Vector u;
  Vector v;
  long pivots = 0;
};

/// Exact transportation simplex on raw marginals (nonnegative, equal totals
/// within 1e-8, else kUnbalanced). Northwest-corner start, epsilon
/// perturbation against degeneracy, Bland's rule on small problems and block
/// pricing on large ones; kNoConvergence after 10 * n_s * n_t pivots.
TransportResult solve_transport(const Vector& supply, const Vector& demand, const Matrix& cost);

TransportResult solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const Matrix& cost);

/// Exhaustive optimum for tiny instances: all permutation couplings when both
/// sides are uniform with at most 6 atoms, otherwise every basic solution of
/// the transportation polytope (at most 4 atoms per side). kTooLarge beyond.
double brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost);

/// |z_i - z_j|^p for every atom pair.
Matrix distance_cost(const Matrix& source_atoms, const Matrix& target_atoms, double p);

double wasserstein_p(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p);

/// c_ij = 1/2 (z_j - Phi z_i)' W^{-1} (z_j - Phi z_i) with Phi = Phi(t1,t0) and
/// W the Gramian steering towards t1, i.e. half the minimum control energy.
Matrix lqr_cost_matrix(const LinearSystem& sys, double t0, double t1,
                       const Matrix& source_atoms, const Matrix& target_atoms,
                       const IntegrationOptions& opts = {});

/// W2^2 between the push-forwards of mu0 by W^{-1/2} Phi and of mu1 by
/// W^{-1/2}; equals twice the Kantorovich optimum under lqr_cost_matrix.
double transformed_w2(const LinearSystem& sys, const DiscreteMeasure& mu0,
                      const DiscreteMeasure& mu1, double t0 = 0.0, double t1 = 1.0,
                      const IntegrationOptions& opts = {});

}  // namespace ensot
