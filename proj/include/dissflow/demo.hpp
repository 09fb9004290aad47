#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dissflow/measures.hpp"

namespace dissflow {

/// A density compared against a reference in both metrics.
struct MetricRow {
  std::string name;
  double l2 = 0.0;
  double w2 = 0.0;
};

/// L2 vs W2 discrimination: every candidate has the same L2 distance to the
/// reference while the W2 distances are strictly ordered.
struct DiscriminationDemo {
  GridDensity reference;
  std::vector<GridDensity> candidates;
  std::vector<MetricRow> rows;
  /// max |L2_i - L2_0|
  double l2_spread = 0.0;
  bool w2_strictly_ordered = false;
  bool pass = false;
};

/// Reference bump with two disjoint translates (one mirrored), listed far
/// then near.
DiscriminationDemo bump_discrimination(int cells = 1200);

/// Uniform reference on [0, 1] against two step densities with identical
/// value histograms, listed coarse then fine.
DiscriminationDemo step_discrimination(int cells = 1024);

/// Displacement vs linear interpolation of two 1D Gaussians.
struct InterpolationDemo {
  GridLayout grid;
  ParticleEnsemble a, b;
  /// KDEs of the endpoints and of both midpoints on the same grid.
  GridDensity kde_a, kde_b, displacement_mid, linear_mid;
  int displacement_modes = 0;
  int linear_modes = 0;
  double mid_mean = 0.0;
  double mid_sd = 0.0;
  /// max deviation of the t = 0 interpolants from the source.
  double endpoint_error = 0.0;
  bool pass = false;
};

InterpolationDemo gaussian_interpolation(double separation = 4.0, Eigen::Index n = 2000, int cells = 600);

/// Local maxima of a 1D density whose height exceeds `floor` times the
/// global maximum.
int count_modes(const GridDensity& density, double floor = 0.05);

/// Writes the figure CSVs into outdir; returns true when every check passes.
bool demo_figures(const std::filesystem::path& outdir, std::ostream& out);

}  // namespace dissflow
