#pragma once

#include <vector>

#include "ensot/numerics.hpp"

namespace ensot {

/// Atom merge tolerance (Euclidean).
inline constexpr double kAtomMergeTol = 1e-12;

/// Finite probability measure sum_i w_i delta_{z_i}. Atoms are the columns of
/// `atoms()`; atoms closer than kAtomMergeTol are merged on construction and
/// weights are renormalized to sum exactly to one.
class DiscreteMeasure {
 public:
  /// Throws kNotNormalized unless the weights sum to 1 within 1e-9.
  DiscreteMeasure(Matrix atoms, Vector weights);

  /// Accepts any positive total mass and divides it out (kZeroMass if none).
  static DiscreteMeasure from_unnormalized(Matrix atoms, Vector weights);
  static DiscreteMeasure dirac(const Vector& point);
  static DiscreteMeasure uniform(Matrix atoms);

  int dim() const { return static_cast<int>(atoms_.rows()); }
  int size() const { return static_cast<int>(atoms_.cols()); }
  const Matrix& atoms() const { return atoms_; }
  const Vector& weights() const { return weights_; }
  Vector atom(int i) const { return atoms_.col(i); }
  double weight(int i) const { return weights_(i); }

  Vector mean() const;

 private:
  struct Unchecked {};
  DiscreteMeasure(Matrix atoms, Vector weights, Unchecked);
  Matrix atoms_;
  Vector weights_;
};

/// N(mean, covariance) with a symmetric PSD covariance (tolerance 1e-10).
class GaussianMeasure {
 public:
  GaussianMeasure(Vector mean, Matrix covariance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }

 private:
  Vector mean_;
  Matrix covariance_;
};

/// Tensor grid with strictly increasing breakpoints per axis. Nodes are
/// enumerated lexicographically with axis 0 varying slowest.
class Grid {
 public:
  explicit Grid(std::vector<Vector> axes);

  /// Axis i spans mean_i +/- sigmas * sqrt(S_ii) with `nodes` points; an axis
  /// with zero variance collapses to the single node at the mean.
  static Grid around(const GaussianMeasure& g, int nodes = 41, double sigmas = 4.0);

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::vector<Vector>& axes() const { return axes_; }
  long size() const;
  Vector node(long index) const;
  Matrix nodes() const;
  /// Volume of the node's cell: per axis, half the distance between its
  /// neighbours (one-sided at the ends, 1 for a single-node axis).
  double cell_volume(long index) const;

 private:
  std::vector<Vector> axes_;
};

DiscreteMeasure pushforward_linear(const DiscreteMeasure& mu, const Matrix& l);
GaussianMeasure gaussian_pushforward(const GaussianMeasure& g, const Matrix& l);

/// Node weights = Gaussian density at the node times the cell volume,
/// renormalized. Needs a positive definite covariance.
DiscreteMeasure grid_discretize(const GaussianMeasure& g, const Grid& grid);

/// Moment match: weighted mean and second central moment (clamped PSD).
GaussianMeasure gaussian_fit(const DiscreteMeasure& mu);

}  // namespace ensot
