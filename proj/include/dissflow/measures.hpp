#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dissflow/errors.hpp"

namespace dissflow {

/// Row-major N x d matrix; one row per particle (or query point).
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Axis-aligned compact box [lower, upper] in R^d.
class BoxDomain {
 public:
  BoxDomain() = default;
  BoxDomain(std::vector<double> lower, std::vector<double> upper);

  /// The cube [lo, hi]^dim.
  static BoxDomain cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lower_.size()); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  double lower(int k) const { return lower_[k]; }
  double upper(int k) const { return upper_[k]; }
  double width(int k) const { return upper_[k] - lower_[k]; }
  double volume() const;
  double diameter() const;

  bool contains(std::span<const double> x, double slack = 0.0) const;
  /// Specular reflection of each coordinate back into the box.
  void reflect(std::span<double> x) const;
  /// Box with the same center and every side scaled by `factor`.
  BoxDomain inflated(double factor) const;

  bool operator==(const BoxDomain&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Uniform-weight empirical measure (1/N) sum_i delta_{x_i}.
struct ParticleEnsemble {
  BoxDomain domain;
  Points positions;

  ParticleEnsemble() = default;
  ParticleEnsemble(BoxDomain dom, Points pos);

  Eigen::Index size() const { return positions.rows(); }
  int dim() const { return domain.dim(); }
  /// Throws unless every row lies inside the (closed) domain.
  void check_inside(double slack = 1e-12) const;
};

/// Regular cell-centered grid over a box; flat index is row-major with the
/// last axis fastest.
class GridLayout {
 public:
  GridLayout() = default;
  GridLayout(BoxDomain domain, std::vector<int> resolution);

  /// Same number of cells along every axis.
  static GridLayout uniform(BoxDomain domain, int cells_per_axis);

  const BoxDomain& domain() const { return domain_; }
  const std::vector<int>& resolution() const { return resolution_; }
  int dim() const { return domain_.dim(); }
  int cells(int axis) const { return resolution_[axis]; }
  Eigen::Index size() const { return size_; }
  double spacing(int axis) const { return domain_.width(axis) / resolution_[axis]; }
  double max_spacing() const;
  double cell_volume() const;
  /// Center coordinate along one axis of the cell with index i.
  double axis_center(int axis, int i) const { return domain_.lower(axis) + (i + 0.5) * spacing(axis); }

  void unravel(Eigen::Index flat, std::span<int> multi) const;
  Eigen::Index ravel(std::span<const int> multi) const;
  /// Cell center of a flat index.
  void center(Eigen::Index flat, std::span<double> x) const;
  /// All cell centers as an ensemble-shaped matrix.
  Points centers() const;
  /// Flat index of the cell containing x (clamped to the grid).
  Eigen::Index locate(std::span<const double> x) const;

  bool operator==(const GridLayout&) const = default;

 private:
  BoxDomain domain_;
  std::vector<int> resolution_;
  Eigen::Index size_ = 0;
};

/// Piecewise-constant density on a grid (value = cell average).
struct GridDensity {
  GridLayout layout;
  Vector values;

  GridDensity() = default;
  GridDensity(GridLayout grid, Vector vals);

  double mass() const { return values.sum() * layout.cell_volume(); }
  bool is_normalized(double tol = 1e-10) const;
  /// Scales values so the density integrates to one; throws on zero mass or
  /// negative values.
  void normalize();
  /// Per-cell probability masses (values * cell volume).
  Vector cell_masses() const { return values * layout.cell_volume(); }
  /// First moment by midpoint quadrature.
  Vector mean() const;
};

GridDensity uniform_density(const GridLayout& layout);

/// Discretized isotropic Gaussian, cell-averaged by midpoint evaluation then
/// normalized over the box.
GridDensity gaussian_density(const GridLayout& layout, std::span<const double> mean, double sigma);

/// A target for distance computations: a finite point set M (its induced
/// family P_M), a density, or an ensemble.
struct PointSet {
  Points points;
};

using TargetSet = std::variant<PointSet, GridDensity, ParticleEnsemble>;

/// Draws n i.i.d. points from a normalized grid density: cell chosen by the
/// cumulative masses, then uniform jitter inside the cell.
ParticleEnsemble sample_density(const GridDensity& target, Eigen::Index n, std::uint64_t seed);

/// Uniform i.i.d. samples inside the box.
ParticleEnsemble sample_uniform(const BoxDomain& domain, Eigen::Index n, std::uint64_t seed);

double dist_to_set(std::span<const double> x, const PointSet& set);

/// (1/N) sum_i dist^2(x_i, M), i.e. W2^2(rho, P_M).
double second_moment_about_set(const ParticleEnsemble& rho, const PointSet& set);

/// Per-particle dist^2(x_i, M).
Vector squared_distances_to_set(const ParticleEnsemble& rho, const PointSet& set);

// Serialization -------------------------------------------------------------

void write_grid_density(std::ostream& out, const GridDensity& density);
GridDensity read_grid_density(std::istream& in);

void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& ensemble);
/// Reads positions written by write_ensemble_csv; the domain must be
/// supplied since the CSV carries positions only.
ParticleEnsemble read_ensemble_csv(std::istream& in, const BoxDomain& domain);

}  // namespace dissflow
