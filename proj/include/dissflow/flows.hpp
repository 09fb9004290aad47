#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dissflow/functionals.hpp"
#include "dissflow/kde.hpp"
#include "dissflow/trajectory.hpp"

namespace dissflow {

/// Nonnegative scalar input u(t).
class DisturbanceSignal {
 public:
  enum class Kind { constant, sinusoid, piecewise, decaying };

  static DisturbanceSignal constant(double u0);
  /// offset + amplitude sin(2 pi t / period + phase); needs offset >= amplitude.
  static DisturbanceSignal sinusoid(double amplitude, double period, double offset, double phase = 0.0);
  /// values[k] on [breakpoints[k-1], breakpoints[k]) with breakpoints[-1] = 0
  /// and the last value held forever; values.size() = breakpoints.size() + 1.
  static DisturbanceSignal piecewise(std::vector<double> breakpoints, std::vector<double> values);
  /// u0 exp(-rate t).
  static DisturbanceSignal decaying(double u0, double rate);

  Kind kind() const { return kind_; }
  double at(double t) const;
  /// sup_{t >= 0} u(t) in closed form.
  double sup_norm() const;
  /// t -> u(t + s).
  DisturbanceSignal shifted(double s) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::constant;
  double u0_ = 0.0;
  double amplitude_ = 0.0;
  double period_ = 1.0;
  double offset_ = 0.0;
  double phase_ = 0.0;
  double rate_ = 0.0;
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

enum class Integrator { explicit_euler, heun };

struct FlowConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  Integrator integrator = Integrator::explicit_euler;
  std::uint64_t seed = 1;
  /// Log every this many steps (plus the initial and final states).
  int log_every = 10;
  /// Lipschitz constant of the drift, if known; dt > 1/(2L) is warned about.
  std::optional<double> lipschitz;

  void validate() const;
};

/// Builds a density surrogate for Fisher-information estimates: a KDE on a
/// grid, mixed with a small uniform component so it stays strictly positive.
std::function<GridDensity(const ParticleEnsemble&)> kde_surrogate(const KernelSpec& kernel, const GridLayout& grid,
                                                                   double uniform_mix = 1e-9);

/// Perturbation of a gradient flow; terms compose additively.
struct PerturbationField {
  enum class Kind { none, isotropic_diffusion, additive_field, entropic_regularization };

  struct Term {
    Kind kind = Kind::none;
    /// additive_field: zeta, scaled by the gain u(t).
    VelocityField zeta;
    /// isotropic_diffusion: surrogate for the Fisher information of rho.
    std::function<GridDensity(const ParticleEnsemble&)> surrogate;
    /// entropic_regularization: the OT functional whose entropic version
    /// (epsilon = u(t)) replaces the exact gradient.
    std::optional<OtToTarget> ot;
  };

  std::vector<Term> terms;

  static PerturbationField none();
  /// Noise sqrt(2 u(t)) dW per coordinate, realizing + u Laplacian(rho).
  static PerturbationField isotropic_diffusion(std::function<GridDensity(const ParticleEnsemble&)> surrogate = {});
  static PerturbationField additive_field(VelocityField zeta);
  static PerturbationField entropic_regularization(OtToTarget ot);

  PerturbationField& operator+=(const PerturbationField& other);
  bool has(Kind kind) const;
  bool is_none() const;
};

/// Deterministic part of the perturbed gradient flow:
///   v = -grad phi - u(t) zeta
/// with the exact OT gradient replaced by the entropic one at epsilon = u(t)
/// for entropic_regularization terms. Diffusion enters through integrate.
VelocityField make_perturbed_gradient_flow(const FunctionalSpec& f, const PerturbationField& pert,
                                           const DisturbanceSignal& u);

/// (1/N) sum |zeta_u(x_i)|^2 for deterministic terms; u(t)^2 I(rho_hat) for
/// isotropic diffusion (I the Fisher information of the surrogate).
double perturbation_norm(const PerturbationField& pert, const ParticleEnsemble& rho, double t,
                         const DisturbanceSignal& u);

/// Quantities sampled at logging times.
struct Probes {
  std::optional<TargetSet> target;
  DistanceOptions distance;
  /// Logged as the Lyapunov value (F_value); 0 when absent.
  std::optional<FunctionalSpec> lyapunov;
  bool log_perturbation_norm = true;
  bool keep_snapshots = false;
  std::function<void(const ParticleEnsemble&, double, std::size_t)> on_log;
};

struct FlowResult {
  TrajectoryLog log;
  ParticleEnsemble final_state;
};

/// Euler-Maruyama (or stochastic Heun) with specular reflection at the box
/// faces. `drift` is the full deterministic velocity (see
/// make_perturbed_gradient_flow); `pert` adds the diffusion and the logged
/// perturbation norm. Throws NumericalError on non-finite positions or when
/// a particle leaves the 2x inflated box before reflection.
FlowResult integrate(const ParticleEnsemble& rho0, const VelocityField& drift, const PerturbationField& pert,
                     const DisturbanceSignal& u, const FlowConfig& config, const Probes& probes = {});

}  // namespace dissflow
