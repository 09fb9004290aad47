#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dissflow/measures.hpp"

namespace dissflow {

/// A coupling between two discrete measures. Exact solvers on equal-size
/// uniform measures return a permutation; entropic solvers a dense matrix.
struct TransportPlan {
  enum class Form { permutation, dense };

  Form form = Form::permutation;
  /// permutation[i] = index in the target matched to source particle i.
  std::vector<Eigen::Index> permutation;
  /// Dense coupling (rows: source, cols: target); empty for permutations.
  Eigen::MatrixXd coupling;
  /// Transport cost <c, pi> with c = |x - y|^2 (= W2^2 for exact plans).
  double cost = 0.0;
  /// Entropic regularization; 0 for exact plans.
  double epsilon = 0.0;
};

struct OtResult {
  /// W2 (square root of plan.cost).
  double distance = 0.0;
  TransportPlan plan;
};

/// Default upper bound on N for the cubic assignment solver.
inline constexpr Eigen::Index kDefaultAssignmentCap = 512;

/// Exact W2 between equal-size 1D ensembles by monotone (sorted) matching.
OtResult w2_exact_1d(const ParticleEnsemble& a, const ParticleEnsemble& b);

/// Exact W2 between equal-size ensembles in any dimension via an optimal
/// assignment (shortest augmenting paths, O(N^3)).
OtResult w2_assignment(const ParticleEnsemble& a, const ParticleEnsemble& b,
                       Eigen::Index cap = kDefaultAssignmentCap);

/// Minimum-cost perfect matching on a dense square cost matrix;
/// returns assignment[row] = col.
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost);

/// Exact optimal plan for equal-size ensembles: sorting in 1D, assignment
/// otherwise (subject to the cap).
OtResult w2_exact(const ParticleEnsemble& a, const ParticleEnsemble& b,
                  Eigen::Index cap = kDefaultAssignmentCap);

struct DistanceOptions {
  Eigen::Index assignment_cap = kDefaultAssignmentCap;
  /// Regularization used when the ensembles are too large for an exact plan.
  double sinkhorn_epsilon = 1e-3;
  /// Seed for resampling density targets.
  std::uint64_t resample_seed = 0x5eed;
};

struct DistanceEstimate {
  /// Estimated W2 (not squared).
  double value = 0.0;
  /// "closed-form-point-set", "exact-1d", "assignment", "sinkhorn-divergence",
  /// optionally prefixed by "resampled-" for density targets.
  std::string method;
};

/// W2(rho, target): closed form for point sets, exact backends for ensembles
/// where feasible, debiased Sinkhorn otherwise; density targets are resampled
/// with N matched to rho and a fixed seed.
DistanceEstimate w2_to_target_set(const ParticleEnsemble& rho, const TargetSet& target,
                                  const DistanceOptions& options = {});

/// Positions (1 - t) x_i + t y_sigma(i) along the optimal assignment.
ParticleEnsemble displacement_interpolate(const ParticleEnsemble& a, const ParticleEnsemble& b, double t,
                                          Eigen::Index cap = kDefaultAssignmentCap);

/// sqrt(sum (a - b)^2 * cellVolume) on identical grids.
double l2_density_distance(const GridDensity& a, const GridDensity& b);

/// Exact W2 between two 1D piecewise-constant densities by integrating the
/// squared difference of their quantile functions.
double w2_grid_1d(const GridDensity& a, const GridDensity& b);

/// Quantile function of a 1D piecewise-constant density at level q in [0, 1].
double grid_quantile_1d(const GridDensity& density, double q);

/// Permutation plans as two columns (source, target).
void write_permutation_csv(std::ostream& out, const TransportPlan& plan);
/// Dense couplings as (i, j, mass) triples; entries below `threshold` are
/// omitted.
void write_coupling_csv(std::ostream& out, const TransportPlan& plan, double threshold = 0.0);

}  // namespace dissflow
