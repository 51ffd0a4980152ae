#include "ensot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ensot {

namespace {

constexpr double kNormalizationTol = 1e-9;

void check_atoms(const Matrix& atoms, const Vector& weights) {
  require(atoms.cols() == weights.size(), ErrorKind::kDimensionMismatch,
          "atom count differs from weight count");
  require(atoms.cols() >= 1, ErrorKind::kInvalidArgument, "a measure needs at least one atom");
  require(atoms.rows() >= 1, ErrorKind::kInvalidArgument, "atoms must have dimension >= 1");
  require_finite(atoms, "atoms");
  require_finite(weights, "weights");
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    require(weights(i) >= 0.0, ErrorKind::kInvalidArgument, "weights must be nonnegative");
  }
}

// Merges atoms closer than kAtomMergeTol. Representatives keep the order of
// their first occurrence.
void merge_atoms(Matrix* atoms, Vector* weights) {
  const Eigen::Index k = atoms->cols();
  std::vector<Eigen::Index> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return (*atoms)(0, a) < (*atoms)(0, b) || ((*atoms)(0, a) == (*atoms)(0, b) && a < b);
  });
  std::vector<Eigen::Index> rep(k);
  std::iota(rep.begin(), rep.end(), 0);
  for (size_t p = 0; p < order.size(); ++p) {
    const Eigen::Index i = order[p];
    for (size_t q = p + 1; q < order.size(); ++q) {
      const Eigen::Index j = order[q];
      if ((*atoms)(0, j) - (*atoms)(0, i) > kAtomMergeTol) break;
      if ((atoms->col(i) - atoms->col(j)).norm() <= kAtomMergeTol) {
        const Eigen::Index a = rep[i], b = rep[j];
        const Eigen::Index root = std::min(a, b);
        // Relabel the larger class; classes are tiny in practice.
        for (Eigen::Index m = 0; m < k; ++m)
          if (rep[m] == a || rep[m] == b) rep[m] = root;
      }
    }
  }
  std::vector<Eigen::Index> slot(k, -1);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < k; ++i)
    if (rep[i] == i) slot[i] = count++;
  if (count == k) return;
  Matrix merged(atoms->rows(), count);
  Vector w = Vector::Zero(count);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (rep[i] == i) merged.col(slot[i]) = atoms->col(i);
    w(slot[rep[i]]) += (*weights)(i);
  }
  *atoms = std::move(merged);
  *weights = std::move(w);
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(Matrix atoms, Vector weights) {
  check_atoms(atoms, weights);
  const double total = weights.sum();
  if (std::abs(total - 1.0) > kNormalizationTol) {
    fail(ErrorKind::kNotNormalized,
         "weights sum to " + std::to_string(total) + " instead of 1");
  }
  weights /= total;
  merge_atoms(&atoms, &weights);
  atoms_ = std::move(atoms);
  weights_ = std::move(weights);
}

DiscreteMeasure::DiscreteMeasure(Matrix atoms, Vector weights, Unchecked)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {}

DiscreteMeasure DiscreteMeasure::from_unnormalized(Matrix atoms, Vector weights) {
  check_atoms(atoms, weights);
  const double total = weights.sum();
  if (!(total > 0.0)) fail(ErrorKind::kZeroMass, "measure has zero total mass");
  weights /= total;
  merge_atoms(&atoms, &weights);
  return DiscreteMeasure(std::move(atoms), std::move(weights), Unchecked{});
}

DiscreteMeasure DiscreteMeasure::dirac(const Vector& point) {
  return DiscreteMeasure(Matrix(point), Vector::Ones(1));
}

DiscreteMeasure DiscreteMeasure::uniform(Matrix atoms) {
  const Eigen::Index k = atoms.cols();
  return from_unnormalized(std::move(atoms), Vector::Ones(k));
}

Vector DiscreteMeasure::mean() const { return atoms_ * weights_; }

GaussianMeasure::GaussianMeasure(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  require(mean_.size() >= 1, ErrorKind::kInvalidArgument, "Gaussian needs dimension >= 1");
  require(covariance_.rows() == mean_.size() && covariance_.cols() == mean_.size(),
          ErrorKind::kDimensionMismatch, "covariance shape differs from the mean dimension");
  require_finite(mean_, "Gaussian mean");
  require_finite(covariance_, "Gaussian covariance");
  if (max_asymmetry(covariance_) > 1e-10) {
    fail(ErrorKind::kNotSymmetric, "covariance asymmetry exceeds 1e-10");
  }
  covariance_ = symmetrize(covariance_);
  if (jacobi_eigen(covariance_).values(0) < -1e-10) {
    fail(ErrorKind::kNotPsd, "covariance has an eigenvalue below -1e-10");
  }
}

Grid::Grid(std::vector<Vector> axes) : axes_(std::move(axes)) {
  require(!axes_.empty(), ErrorKind::kInvalidArgument, "grid needs at least one axis");
  for (const Vector& axis : axes_) {
    require(axis.size() >= 1, ErrorKind::kInvalidArgument, "grid axis needs at least one node");
    require_finite(axis, "grid axis");
    for (Eigen::Index i = 1; i < axis.size(); ++i) {
      require(axis(i) > axis(i - 1), ErrorKind::kInvalidArgument,
              "grid breakpoints must be strictly increasing");
    }
  }
}

Grid Grid::around(const GaussianMeasure& g, int nodes, double sigmas) {
  require(nodes >= 1, ErrorKind::kInvalidArgument, "grid needs at least one node per axis");
  std::vector<Vector> axes;
  for (int i = 0; i < g.dim(); ++i) {
    const double sd = std::sqrt(std::max(0.0, g.covariance()(i, i)));
    if (sd == 0.0 || nodes == 1) {
      axes.push_back(Vector::Constant(1, g.mean()(i)));
    } else {
      axes.push_back(Vector::LinSpaced(nodes, g.mean()(i) - sigmas * sd,
                                       g.mean()(i) + sigmas * sd));
    }
  }
  return Grid(std::move(axes));
}

long Grid::size() const {
  long total = 1;
  for (const Vector& axis : axes_) total *= static_cast<long>(axis.size());
  return total;
}

Vector Grid::node(long index) const {
  require(index >= 0 && index < size(), ErrorKind::kInvalidArgument, "grid index out of range");
  Vector out(dim());
  for (int a = dim() - 1; a >= 0; --a) {
    const long d = static_cast<long>(axes_[a].size());
    out(a) = axes_[a](index % d);
    index /= d;
  }
  return out;
}

Matrix Grid::nodes() const {
  const long total = size();
  Matrix out(dim(), total);
  for (long i = 0; i < total; ++i) out.col(i) = node(i);
  return out;
}

double Grid::cell_volume(long index) const {
  require(index >= 0 && index < size(), ErrorKind::kInvalidArgument, "grid index out of range");
  double volume = 1.0;
  for (int a = dim() - 1; a >= 0; --a) {
    const Vector& axis = axes_[a];
    const long d = static_cast<long>(axis.size());
    const long i = index % d;
    index /= d;
    if (d == 1) continue;
    const double left = i > 0 ? axis(i) - axis(i - 1) : 0.0;
    const double right = i + 1 < d ? axis(i + 1) - axis(i) : 0.0;
    volume *= 0.5 * (left + right);
  }
  return volume;
}

DiscreteMeasure pushforward_linear(const DiscreteMeasure& mu, const Matrix& l) {
  require(l.cols() == mu.dim(), ErrorKind::kDimensionMismatch,
          "map columns differ from the atom dimension");
  require_finite(l, "pushforward map");
  return DiscreteMeasure::from_unnormalized(l * mu.atoms(), mu.weights());
}

GaussianMeasure gaussian_pushforward(const GaussianMeasure& g, const Matrix& l) {
  require(l.cols() == g.dim(), ErrorKind::kDimensionMismatch,
          "map columns differ from the Gaussian dimension");
  return GaussianMeasure(l * g.mean(), symmetrize(l * g.covariance() * l.transpose()));
}

DiscreteMeasure grid_discretize(const GaussianMeasure& g, const Grid& grid) {
  require(grid.dim() == g.dim(), ErrorKind::kDimensionMismatch,
          "grid dimension differs from the Gaussian dimension");
  const Matrix nodes = grid.nodes();
  const long total = grid.size();
  Vector weights(total);
  if (total == 1) {
    weights(0) = 1.0;
    return DiscreteMeasure(nodes, weights);
  }
  Eigen::LLT<Matrix> llt(g.covariance());
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::kNotPsd, "grid_discretize needs a positive definite covariance");
  }
  const Matrix l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double log_norm = -0.5 * (g.dim() * std::log(2.0 * M_PI) + log_det);
  for (long i = 0; i < total; ++i) {
    const Vector z = llt.matrixL().solve(Vector(nodes.col(i) - g.mean()));
    weights(i) = std::exp(log_norm - 0.5 * z.squaredNorm()) * grid.cell_volume(i);
  }
  if (!(weights.sum() > 0.0)) {
    fail(ErrorKind::kZeroMass, "all grid densities underflow to zero");
  }
  return DiscreteMeasure::from_unnormalized(nodes, weights);
}

GaussianMeasure gaussian_fit(const DiscreteMeasure& mu) {
  const Vector m = mu.mean();
  const Matrix centered = mu.atoms().colwise() - m;
  Matrix cov = symmetrize(centered * mu.weights().asDiagonal() * centered.transpose());
  const SymmetricEigen eig = jacobi_eigen(cov);
  cov = symmetrize(eig.vectors * eig.values.cwiseMax(0.0).asDiagonal() * eig.vectors.transpose());
  return GaussianMeasure(m, cov);
}

}  // namespace ensot
