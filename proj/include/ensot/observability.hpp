#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ensot/lti.hpp"
#include "ensot/measures.hpp"

namespace ensot {

/// Verdict on ensemble observability of x' = A x, y = C x. The verdict is the
/// Kalman rank test; the certificate is either the pivot columns of the
/// observability matrix or a unit unobservable direction.
struct EnsembleObservabilityReport {
  bool observable = false;
  std::vector<int> pivot_columns;  // rank certificate when observable
  Vector witness;                  // unit kernel vector when not observable
  std::string method;
};

EnsembleObservabilityReport ensemble_observable_lti(const Matrix& a, const Matrix& c);

/// 100 uniform times on (0, 10].
std::vector<double> default_kernel_time_grid();

/// First grid time t with ||C e^{At} x|| > 1e-8 ||x|| for every column x of
/// `points`. kNotFound if no grid time qualifies.
double kernel_intersection_time(const Matrix& a, const Matrix& c, const Matrix& points,
                                const std::vector<double>& time_grid =
                                    default_kernel_time_grid(),
                                const IntegrationOptions& opts = {});

/// Initial ensembles (delta_0, delta_{-nu}) with identical output laws at every
/// time when (A, C) is unobservable; nullopt for an observable pair.
std::optional<std::pair<DiscreteMeasure, DiscreteMeasure>> unobservable_counterexample(
    const Matrix& a, const Matrix& c);

/// max over `times` of W1 between the push-forwards of mu and nu under C e^{At}.
double output_discrepancy(const Matrix& a, const Matrix& c, const DiscreteMeasure& mu,
                          const DiscreteMeasure& nu, const std::vector<double>& times,
                          const IntegrationOptions& opts = {});

}  // namespace ensot
