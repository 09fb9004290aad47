#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dissflow/measures.hpp"
#include "dissflow/transport.hpp"

namespace dissflow {

using ScalarField = std::function<double(std::span<const double>)>;
using GradientField = std::function<void(std::span<const double>, std::span<double>)>;

/// V(rho) = E_rho[V(x)].
struct PotentialEnergy {
  ScalarField value;
  GradientField gradient;
  /// Lipschitz constant of grad V (NaN when unknown).
  double lipschitz = std::numeric_limits<double>::quiet_NaN();
  std::string name = "potential";
};

/// V(x) = (modulus / 2) |x - center|^2; grad V is modulus-Lipschitz.
PotentialEnergy quadratic_potential(std::vector<double> center, double modulus = 1.0);

/// H(rho) = int rho log rho, evaluated on a density surrogate built from the
/// particles (a KDE or an oracle density). Without a surrogate the entropy of
/// an empirical measure is -infinity and evaluation is refused.
struct Entropy {
  std::function<GridDensity(const ParticleEnsemble&)> surrogate;
  /// Density floor as a multiple of the uniform density on the box.
  double floor_factor = 1e-12;
};

/// (1/2) W2^2(rho, target) (see DESIGN notes in the README for the factor);
/// epsilon > 0 switches the gradient to the entropic barycentric map.
struct OtToTarget {
  TargetSet target;
  double epsilon = 0.0;
  DistanceOptions distance;
};

struct FunctionalSpec {
  std::variant<PotentialEnergy, Entropy, OtToTarget> kind;
  /// Claimed convexity / growth modulus.
  std::optional<double> lambda;
  /// Claimed smoothness constant.
  std::optional<double> l_smooth;
};

/// Particle velocities as a function of (ensemble, time).
struct VelocityField {
  std::function<Points(const ParticleEnsemble&, double)> evaluate;
  std::string provenance;

  Points operator()(const ParticleEnsemble& rho, double t) const { return evaluate(rho, t); }
};

double eval_functional(const FunctionalSpec& f, const ParticleEnsemble& rho);

/// v = -grad(dF/drho) at the particles.
VelocityField gradient_field(const FunctionalSpec& f);

/// Convenience: gradient_field(f)(rho, 0).
Points gradient_velocities(const FunctionalSpec& f, const ParticleEnsemble& rho);

/// A representative minimizer ensemble for a target set: the points of a
/// point set (cycled to n particles), an ensemble as is, or a density
/// resampled with n particles.
ParticleEnsemble target_ensemble(const TargetSet& target, const BoxDomain& domain, Eigen::Index n,
                                 std::uint64_t seed = 0x5eed);

// Checkers ------------------------------------------------------------------

struct CheckerRow {
  std::size_t sample = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool skipped = false;
};

struct CheckerReport {
  std::string name;
  std::vector<CheckerRow> rows;
  /// Empirical modulus: min ratio for growth / dominance, max for smoothness.
  double modulus = std::numeric_limits<double>::quiet_NaN();
  /// Samples contradicting the claimed constant (beyond tol).
  std::vector<std::size_t> violations;
  std::size_t skipped = 0;
};

struct CheckerOptions {
  /// Relative tolerance applied to the claimed constant.
  double tol = 1e-6;
  /// Samples with W2^2 (or F - F*) below this are skipped.
  double degenerate = 1e-14;
};

/// Ratio 2 (F(rho) - F*) / W2^2(rho, rho*) per sample; F* = F(target).
CheckerReport check_quadratic_growth(const FunctionalSpec& f, const std::vector<ParticleEnsemble>& samples,
                                     const TargetSet& target, const CheckerOptions& options = {});

/// Ratio ||grad dF/drho||^2_rho / (2 (F(rho) - F*)) per sample.
CheckerReport check_gradient_dominance(const FunctionalSpec& f, const std::vector<ParticleEnsemble>& samples,
                                       const TargetSet& target, const CheckerOptions& options = {});

/// |F(rho1) - F(rho0) - D_v F(rho0)| / (W2^2 / 2) along the optimal
/// assignment between each pair.
CheckerReport check_l_smoothness(const FunctionalSpec& f,
                                 const std::vector<std::pair<ParticleEnsemble, ParticleEnsemble>>& pairs,
                                 const CheckerOptions& options = {});

/// Largest |grad V(x) - grad V(y)| / |x - y| over random pairs in the box.
double spot_check_gradient_lipschitz(const PotentialEnergy& v, const BoxDomain& domain, int pairs,
                                     std::uint64_t seed);

/// CSV (sample, lhs, rhs, ratio) plus a trailing summary comment line.
void write_checker_report(std::ostream& out, const CheckerReport& report);

// Fisher information and density gradients -----------------------------------

/// Default floor: 1e-12 times the uniform density on the grid's box.
double default_density_floor(const GridLayout& layout);

/// I(rho) = int |grad rho|^2 / rho by central differences (one-sided at the
/// faces) and midpoint quadrature. Throws naming the first cell below floor.
double fisher_information(const GridDensity& rho, std::optional<double> floor = std::nullopt);

/// grad log rho at every cell center (rows follow the flat cell index).
Points log_density_gradient(const GridDensity& rho, double floor);

/// Multilinear interpolation of per-cell vector data at arbitrary points
/// (clamped to the outermost cell centers).
Points interpolate_cells(const GridLayout& layout, const Points& cell_values, const Points& x);

// Proper loss functions --------------------------------------------------------

/// A C^1 loss V with strict global minimum V* attained on the point set M.
struct ProperLoss {
  ScalarField value;
  GradientField gradient;
  double minimum = 0.0;
  PointSet minimizers;
};

/// The lifted functional mu -> int V dmu as a potential energy.
FunctionalSpec lift_proper_loss(const ProperLoss& loss, std::optional<double> lambda = std::nullopt,
                                std::optional<double> l_smooth = std::nullopt);

struct ProperLossReport {
  /// min over samples of (V(x) - V*) / dist^2(x, M): quadratic lower bound.
  double growth = 0.0;
  /// min over samples of |grad V(x)|^2 / (V(x) - V*): gradient size bound.
  double gradient_size = 0.0;
  /// max finite-difference Lipschitz ratio of grad V near the samples.
  double local_lipschitz = 0.0;
  /// V(x) >= V* at every sample and V(m) = V* on M.
  bool minimum_holds = true;
};

/// Pointwise empirical version of the proper-loss conditions on sample
/// points with power-law comparison functions: quadratic lower bound,
/// gradient size, and local Lipschitz continuity of the gradient.
ProperLossReport check_proper_loss(const ProperLoss& loss, const Points& samples, double fd_step = 1e-5);

}  // namespace dissflow
