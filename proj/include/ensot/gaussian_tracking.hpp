#pragma once

#include <vector>

#include "ensot/lti.hpp"
#include "ensot/measures.hpp"

namespace ensot {

/// K' = -A'K - KA + KBB'K on [0, 1], tabulated on the integration grid.
class RiccatiSolution {
 public:
  RiccatiSolution(const LinearSystem& sys, const Matrix& k0, const IntegrationOptions& opts = {});

  /// K(t) for t in [0, 1]; off-node times take a partial RK4 step.
  Matrix at(double t) const;
  /// Right side of the Riccati equation at (t, K).
  Matrix rhs(double t, const Matrix& k) const;

  const Matrix& k0() const { return values_.front(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Matrix>& values() const { return values_; }

 private:
  LinearSystem sys_;
  std::vector<double> times_;
  std::vector<Matrix> values_;
};

/// K(0) = S0^{-1/2} [S0^{1/2} W^{-1} S0^{1/2}
///                   - (S0^{1/2} W^{-1} Phi S1 Phi' W^{-1} S0^{1/2})^{1/2}] S0^{-1/2}
/// with W = W(0,1) and Phi = Phi(0,1).
Matrix riccati_initial(const LinearSystem& sys, const Matrix& s0, const Matrix& s1,
                       const IntegrationOptions& opts = {});

/// kNotControllable, kNotPsd for non-PD endpoints, kBlowUp if |K| > 1e12.
RiccatiSolution riccati_solve(const LinearSystem& sys, const Matrix& s0, const Matrix& s1,
                              const IntegrationOptions& opts = {});

/// Gaussian displacement interpolation N(nu_t, Sigma_t), t in [0, 1], along
/// minimum-energy trajectories of `sys`.
class GaussianInterpolant {
 public:
  GaussianInterpolant(const LinearSystem& sys, const GaussianMeasure& g0,
                      const GaussianMeasure& g1, const IntegrationOptions& opts = {});

  Vector mean(double t) const;
  Matrix covariance(double t) const;
  GaussianMeasure at(double t) const { return GaussianMeasure(mean(t), covariance(t)); }

  /// Feedforward costate m(t) of the mean dynamics
  /// nu' = (A - BB'K) nu + BB' m.
  Vector m(double t) const;
  /// Transition matrix of A - BB'K from 0 to t.
  Matrix hat_transition(double t) const;
  const RiccatiSolution& riccati() const { return riccati_; }
  const LinearSystem& system() const { return sys_; }

 private:
  // [K | Phih(t,0) | Phih(0,t) | Wh(0,t) | Phi(t,0) | Phi(0,t) | W(0,t)]
  Matrix state(double t) const;

  LinearSystem sys_;
  GaussianMeasure g0_, g1_;
  RiccatiSolution riccati_;
  std::vector<double> times_;
  std::vector<Matrix> table_;
  Vector mean_gain_;   // Wh(0,1)^{-1} (Phih(0,1) nu1 - nu0)
  Matrix s0_sqrt_;
  Matrix cov_shift_;   // (...)^{1/2} - S0^{1/2} W(0,1)^{-1} S0^{1/2}
  Matrix s0_inv_sqrt_;
};

/// State means on k = 0..T: minimizes sum_k 1/2 d_k' W_k^{-1} d_k with
/// d_k = nu_{k+1} - Phi(k+1,k) nu_k, W_k = W(k+1,k), subject to C(k) nu_k = y_k.
std::vector<Vector> infer_state_means(const LinearSystem& sys,
                                      const std::vector<Vector>& output_means,
                                      const IntegrationOptions& opts = {});

struct CovarianceInference {
  std::vector<Matrix> covariances;
  double objective = 0.0;  // sum of Bures costs in the transformed coordinates
  int sweeps = 0;
};

struct CovarianceOptions {
  double tolerance = 1e-9;
  int max_sweeps = 10000;
  /// Conditional (hidden) standard deviations are kept above this fraction of
  /// the observed scale so every state covariance stays positive definite.
  double hidden_floor = 1e-4;
};

/// Bures cost Tr P + Tr Q - 2 Tr (P^{1/2} Q P^{1/2})^{1/2}.
double bures_cost(const Matrix& p, const Matrix& q);

/// Sum over intervals of the Bures cost between W^{-1/2} Phi S_k Phi' W^{-1/2}
/// and W^{-1/2} S_{k+1} W^{-1/2} (W = W(k+1,k), Phi = Phi(k+1,k)).
double covariance_transport_cost(const LinearSystem& sys, const std::vector<Matrix>& covs,
                                 const IntegrationOptions& opts = {});

/// State covariances on k = 0..T minimizing covariance_transport_cost subject
/// to C(k) S_k C(k)' = output_covs[k], by coordinate descent over the free
/// blocks of an eliminated Cholesky-like parametrization.
CovarianceInference infer_state_covariances(const LinearSystem& sys,
                                            const std::vector<Matrix>& output_covs,
                                            const CovarianceOptions& copts = {},
                                            const IntegrationOptions& opts = {});

struct GaussianTrack {
  std::vector<double> times;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::vector<Vector> state_means;       // per observation time
  std::vector<Matrix> state_covariances;  // per observation time
  double covariance_objective = 0.0;
};

/// Two-stage inference followed by one interpolant per unit interval, sampled
/// at `samples_per_interval` uniform steps (both endpoints included).
GaussianTrack track_gaussian(const LinearSystem& sys, const std::vector<GaussianMeasure>& outputs,
                             int samples_per_interval = 200, const CovarianceOptions& copts = {},
                             const IntegrationOptions& opts = {});

}  // namespace ensot
