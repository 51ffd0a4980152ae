#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ensot/measures.hpp"

namespace ensot {

/// Drift V(x) of the uncontrolled flow x' = V(x).
class VectorField {
 public:
  VectorField(int dim, std::function<Vector(const Vector&)> fn);

  static VectorField constant(Vector v);
  /// V(x) = M x + b.
  static VectorField linear(Matrix m, Vector b);
  /// Multilinear interpolation of samples (dim x grid.size(), nodes in grid
  /// order); states outside the grid are clamped to its bounding box.
  static VectorField interpolated(Grid grid, Matrix samples);

  /// x -> P V(P^{-1} x), the field in coordinates y = P x.
  VectorField transformed(const Matrix& p) const;

  int dim() const { return dim_; }
  Vector operator()(const Vector& x) const;

 private:
  int dim_;
  std::function<Vector(const Vector&)> fn_;
};

/// Open box or ball, optionally seen through a linear change of coordinates:
/// x is inside when P^{-1} x lies in the base region.
class ControlRegion {
 public:
  static ControlRegion box(Vector lower, Vector upper);
  static ControlRegion ball(Vector center, double radius);

  /// The image P(D).
  ControlRegion transformed(const Matrix& p) const;

  int dim() const { return static_cast<int>(a_.size()); }
  bool contains(const Vector& x) const;

 private:
  enum class Shape { kBox, kBall };
  ControlRegion(Shape shape, Vector a, Vector b, double radius);
  Shape shape_;
  Vector a_, b_;  // box corners, or ball center in a_
  double radius_ = 0.0;
  std::optional<Matrix> inverse_;  // P^{-1} of the accumulated transform
};

enum class FlowDirection { kForward, kBackward };

struct HittingOptions {
  int steps = 10000;
  double time_resolution = 1e-9;
};

/// First time the flow of +V (forward) or -V (backward) from x enters D, or
/// nullopt when it does not within t_max. RK4 with step t_max / steps, then
/// bisection inside the entry step. kNonFiniteState if the state diverges.
std::optional<double> hitting_time(const VectorField& v, const ControlRegion& d,
                                   const Vector& x, FlowDirection direction, double t_max,
                                   const HittingOptions& opts = {});

/// Right-continuous step CDF of hitting times: F(t) = total weight of atoms
/// that enter D by time t.
struct ReachCdf {
  std::vector<double> times;       // distinct hitting times, ascending
  std::vector<double> cumulative;  // mass reached by each time
  std::vector<int> unreached;      // atom indices that never enter D
  std::vector<double> atom_times;  // per atom; +inf when unreached

  double operator()(double t) const;
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

ReachCdf reach_cdf(const VectorField& v, const ControlRegion& d, const DiscreteMeasure& mu,
                   FlowDirection direction, double t_max, const HittingOptions& opts = {});

/// inf { t >= 0 : F(t) >= m }; 0 for m = 0. kMassNotAttained if F stays below m.
double quantile(const ReachCdf& cdf, double m);

struct ControllabilityMeasure {
  double s = 0.0;                // sup_m F^{-1}(m) + H^{-1}(1 - m)
  std::optional<double> paired;  // max_i |t0_i + t1_i| under index pairing
  bool paired_agrees = true;     // |paired - s| <= 1e-6 when paired is set
};

/// Exact sup over m in [0,1]: the expression is piecewise constant between
/// the mass breakpoints of F and 1 - H, so it is evaluated at every
/// breakpoint and at the midpoint of every gap between them.
double sup_quantile_sum(const ReachCdf& f, const ReachCdf& h);

/// Same sup over the uniform grid {0, 1/(points-1), ..., 1}; for validation.
double sup_quantile_sum_dense(const ReachCdf& f, const ReachCdf& h, int points = 1001);

/// kNotReachable (listing the atoms) unless every atom of mu0 reaches D
/// forward and every atom of mu1 reaches D backward within t_max.
ControllabilityMeasure controllability_measure(const VectorField& v, const ControlRegion& d,
                                               const DiscreteMeasure& mu0,
                                               const DiscreteMeasure& mu1, double t_max,
                                               const HittingOptions& opts = {});

}  // namespace ensot
