#include "dissflow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dissflow/rng.hpp"
#include "dissflow/sinkhorn.hpp"

namespace dissflow {

// DisturbanceSignal ----------------------------------------------------------------

DisturbanceSignal DisturbanceSignal::constant(double u0) {
  if (!(u0 >= 0.0)) throw InvalidArgument("disturbance: constant value must be >= 0");
  DisturbanceSignal s;
  s.kind_ = Kind::constant;
  s.u0_ = u0;
  return s;
}

DisturbanceSignal DisturbanceSignal::sinusoid(double amplitude, double period, double offset, double phase) {
  if (!(period > 0.0)) throw InvalidArgument("disturbance: sinusoid period must be positive");
  if (!(offset >= std::abs(amplitude))) throw InvalidArgument("disturbance: sinusoid needs offset >= |amplitude|");
  DisturbanceSignal s;
  s.kind_ = Kind::sinusoid;
  s.amplitude_ = amplitude;
  s.period_ = period;
  s.offset_ = offset;
  s.phase_ = phase;
  return s;
}

DisturbanceSignal DisturbanceSignal::piecewise(std::vector<double> breakpoints, std::vector<double> values) {
  if (values.size() != breakpoints.size() + 1)
    throw InvalidArgument("disturbance: piecewise needs one more value than breakpoints");
  for (std::size_t k = 0; k < breakpoints.size(); ++k) {
    if (!(breakpoints[k] > 0.0) || (k > 0 && !(breakpoints[k] > breakpoints[k - 1])))
      throw InvalidArgument("disturbance: breakpoints must be positive and increasing");
  }
  for (double v : values)
    if (!(v >= 0.0)) throw InvalidArgument("disturbance: piecewise values must be >= 0");
  DisturbanceSignal s;
  s.kind_ = Kind::piecewise;
  s.breakpoints_ = std::move(breakpoints);
  s.values_ = std::move(values);
  return s;
}

DisturbanceSignal DisturbanceSignal::decaying(double u0, double rate) {
  if (!(u0 >= 0.0) || !(rate >= 0.0)) throw InvalidArgument("disturbance: decaying needs u0 >= 0 and rate >= 0");
  DisturbanceSignal s;
  s.kind_ = Kind::decaying;
  s.u0_ = u0;
  s.rate_ = rate;
  return s;
}

double DisturbanceSignal::at(double t) const {
  switch (kind_) {
    case Kind::constant:
      return u0_;
    case Kind::sinusoid:
      return std::max(0.0, offset_ + amplitude_ * std::sin(2.0 * std::numbers::pi * t / period_ + phase_));
    case Kind::piecewise: {
      const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
      return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
    }
    case Kind::decaying:
      return u0_ * std::exp(-rate_ * t);
  }
  return 0.0;
}

double DisturbanceSignal::sup_norm() const {
  switch (kind_) {
    case Kind::constant:
    case Kind::decaying:
      return u0_;
    case Kind::sinusoid:
      return offset_ + std::abs(amplitude_);
    case Kind::piecewise:
      return *std::max_element(values_.begin(), values_.end());
  }
  return 0.0;
}

DisturbanceSignal DisturbanceSignal::shifted(double s) const {
  if (!(s >= 0.0)) throw InvalidArgument("disturbance: shift must be >= 0");
  DisturbanceSignal out = *this;
  switch (kind_) {
    case Kind::constant:
      break;
    case Kind::sinusoid:
      out.phase_ = phase_ + 2.0 * std::numbers::pi * s / period_;
      break;
    case Kind::decaying:
      out.u0_ = u0_ * std::exp(-rate_ * s);
      break;
    case Kind::piecewise: {
      out.breakpoints_.clear();
      out.values_.clear();
      out.values_.push_back(at(s));
      for (std::size_t k = 0; k < breakpoints_.size(); ++k) {
        if (breakpoints_[k] > s) {
          out.breakpoints_.push_back(breakpoints_[k] - s);
          out.values_.push_back(values_[k + 1]);
        }
      }
      break;
    }
  }
  return out;
}

std::string DisturbanceSignal::describe() const {
  std::ostringstream s;
  switch (kind_) {
    case Kind::constant:
      s << "constant(" << u0_ << ")";
      break;
    case Kind::sinusoid:
      s << "sinusoid(amplitude=" << amplitude_ << ",period=" << period_ << ",offset=" << offset_
        << ",phase=" << phase_ << ")";
      break;
    case Kind::piecewise:
      s << "piecewise(" << values_.size() << " pieces)";
      break;
    case Kind::decaying:
      s << "decaying(" << u0_ << ",rate=" << rate_ << ")";
      break;
  }
  return s.str();
}

// FlowConfig --------------------------------------------------------------------------

void FlowConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("flow: dt must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InvalidArgument("flow: tEnd must be >= 0");
  if (log_every < 1) throw InvalidArgument("flow: logEvery must be >= 1");
  if (lipschitz && !(*lipschitz >= 0.0)) throw InvalidArgument("flow: lipschitz must be >= 0");
}

// PerturbationField --------------------------------------------------------------------

std::function<GridDensity(const ParticleEnsemble&)> kde_surrogate(const KernelSpec& kernel, const GridLayout& grid,
                                                                   double uniform_mix) {
  if (!(uniform_mix >= 0.0 && uniform_mix < 1.0)) throw InvalidArgument("kde_surrogate: mix must lie in [0, 1)");
  return [kernel, grid, uniform_mix](const ParticleEnsemble& rho) {
    GridDensity g = kde_evaluate(rho, kernel, grid);
    const double uniform = 1.0 / grid.domain().volume();
    g.values = (1.0 - uniform_mix) * g.values.array() + uniform_mix * uniform;
    return g;
  };
}

PerturbationField PerturbationField::none() { return {}; }

PerturbationField PerturbationField::isotropic_diffusion(std::function<GridDensity(const ParticleEnsemble&)> surrogate) {
  PerturbationField p;
  Term t;
  t.kind = Kind::isotropic_diffusion;
  t.surrogate = std::move(surrogate);
  p.terms.push_back(std::move(t));
  return p;
}

PerturbationField PerturbationField::additive_field(VelocityField zeta) {
  if (!zeta.evaluate) throw InvalidArgument("additive perturbation: zeta is empty");
  PerturbationField p;
  Term t;
  t.kind = Kind::additive_field;
  t.zeta = std::move(zeta);
  p.terms.push_back(std::move(t));
  return p;
}

PerturbationField PerturbationField::entropic_regularization(OtToTarget ot) {
  PerturbationField p;
  Term t;
  t.kind = Kind::entropic_regularization;
  t.ot = std::move(ot);
  p.terms.push_back(std::move(t));
  return p;
}

PerturbationField& PerturbationField::operator+=(const PerturbationField& other) {
  terms.insert(terms.end(), other.terms.begin(), other.terms.end());
  return *this;
}

bool PerturbationField::has(Kind kind) const {
  return std::any_of(terms.begin(), terms.end(), [kind](const Term& t) { return t.kind == kind; });
}

bool PerturbationField::is_none() const {
  return std::all_of(terms.begin(), terms.end(), [](const Term& t) { return t.kind == Kind::none; });
}

namespace {

const OtToTarget* entropic_term(const PerturbationField& pert) {
  for (const auto& t : pert.terms)
    if (t.kind == PerturbationField::Kind::entropic_regularization) return &*t.ot;
  return nullptr;
}

Points ot_field(const OtToTarget& base, double epsilon, const ParticleEnsemble& rho) {
  OtToTarget ot = base;
  ot.epsilon = epsilon;
  FunctionalSpec f;
  f.kind = ot;
  return gradient_velocities(f, rho);
}

}  // namespace

VelocityField make_perturbed_gradient_flow(const FunctionalSpec& f, const PerturbationField& pert,
                                           const DisturbanceSignal& u) {
  const OtToTarget* entropic = entropic_term(pert);
  if (entropic && !std::holds_alternative<OtToTarget>(f.kind))
    throw InvalidArgument("entropic regularization perturbs an OT-to-target functional only");
  VelocityField base = gradient_field(f);
  std::vector<VelocityField> additive;
  for (const auto& t : pert.terms)
    if (t.kind == PerturbationField::Kind::additive_field) additive.push_back(t.zeta);

  VelocityField out;
  out.provenance = base.provenance;
  if (entropic) out.provenance += "+entropic";
  if (!additive.empty()) out.provenance += "+additive";
  std::optional<OtToTarget> ot;
  if (entropic) ot = std::get<OtToTarget>(f.kind);
  out.evaluate = [base, additive, ot, u](const ParticleEnsemble& rho, double t) {
    const double ut = u.at(t);
    Points v = ot && ut > 0.0 ? ot_field(*ot, ut, rho) : base(rho, t);
    for (const auto& z : additive) v -= ut * z(rho, t);
    return v;
  };
  return out;
}

double perturbation_norm(const PerturbationField& pert, const ParticleEnsemble& rho, double t,
                         const DisturbanceSignal& u) {
  const double ut = u.at(t);
  Points zeta = Points::Zero(rho.size(), rho.dim());
  bool deterministic = false;
  double diffusion = 0.0;
  for (const auto& term : pert.terms) {
    switch (term.kind) {
      case PerturbationField::Kind::none:
        break;
      case PerturbationField::Kind::additive_field:
        zeta += ut * term.zeta(rho, t);
        deterministic = true;
        break;
      case PerturbationField::Kind::entropic_regularization:
        if (ut > 0.0) {
          zeta += ot_field(*term.ot, 0.0, rho) - ot_field(*term.ot, ut, rho);
          deterministic = true;
        }
        break;
      case PerturbationField::Kind::isotropic_diffusion: {
        if (ut == 0.0) break;
        if (!term.surrogate)
          throw InvalidArgument("perturbation_norm: isotropic diffusion needs a density surrogate (e.g. a KDE)");
        diffusion += ut * ut * fisher_information(term.surrogate(rho));
        break;
      }
    }
  }
  double total = diffusion;
  if (deterministic) total += zeta.squaredNorm() / static_cast<double>(rho.size());
  return total;
}

// Integration ----------------------------------------------------------------------------

namespace {

class Stepper {
 public:
  Stepper(const BoxDomain& domain, std::uint64_t seed) : domain_(domain), outer_(domain.inflated(2.0)), noise_(seed) {}

  void add_noise(Points& x, double sigma, std::size_t step) const {
    if (sigma == 0.0) return;
    const Eigen::Index d = x.cols();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index k = 0; k < d; k += 2) {
        double z0, z1;
        noise_.pair(static_cast<std::uint64_t>(i), step, static_cast<std::uint64_t>(k / 2), z0, z1);
        x(i, k) += sigma * z0;
        if (k + 1 < d) x(i, k + 1) += sigma * z1;
      }
    }
  }

  void confine(Points& x, std::size_t step) const {
    const auto d = static_cast<std::size_t>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::span<double> row(x.row(i).data(), d);
      for (double v : row) {
        if (!std::isfinite(v)) {
          std::ostringstream msg;
          msg << "integrate: non-finite position for particle " << i << " at step " << step;
          throw NumericalError(msg.str());
        }
      }
      if (!outer_.contains(row)) {
        std::ostringstream msg;
        msg << "integrate: particle " << i << " left the 2x inflated domain at step " << step
            << " (dt too large for the drift)";
        throw NumericalError(msg.str());
      }
      domain_.reflect(row);
    }
  }

 private:
  const BoxDomain& domain_;
  BoxDomain outer_;
  CounterNormal noise_;
};

}  // namespace

FlowResult integrate(const ParticleEnsemble& rho0, const VelocityField& drift, const PerturbationField& pert,
                     const DisturbanceSignal& u, const FlowConfig& config, const Probes& probes) {
  config.validate();
  if (!drift.evaluate) throw InvalidArgument("integrate: empty drift");
  rho0.check_inside();
  FlowResult result;
  TrajectoryLog& log = result.log;
  log.seed = config.seed;
  if (config.lipschitz && *config.lipschitz > 0.0 && config.dt > 0.5 / *config.lipschitz) {
    std::ostringstream msg;
    msg << "dt = " << config.dt << " exceeds the stability cap 1/(2L) = " << 0.5 / *config.lipschitz;
    log.warnings.push_back(msg.str());
  }
  const bool diffusion = pert.has(PerturbationField::Kind::isotropic_diffusion);
  const Stepper stepper(rho0.domain, derive_seed(config.seed, "diffusion"));
  ParticleEnsemble rho = rho0;

  auto record = [&](double t, std::size_t step) {
    const double w2 = probes.target ? w2_to_target_set(rho, *probes.target, probes.distance).value : 0.0;
    const double v = probes.lyapunov ? eval_functional(*probes.lyapunov, rho) : 0.0;
    const double pn = probes.log_perturbation_norm ? perturbation_norm(pert, rho, t, u) : 0.0;
    log.append(t, w2, v, pn, u.at(t));
    if (probes.keep_snapshots) log.snapshots.push_back(rho.positions);
    if (probes.on_log) probes.on_log(rho, t, step);
  };

  const auto steps = static_cast<std::size_t>(std::llround(std::ceil(config.t_end / config.dt - 1e-9)));
  record(0.0, 0);
  for (std::size_t step = 1; step <= steps; ++step) {
    const double t0 = (step - 1) * config.dt;
    const double h = std::min(config.dt, config.t_end - t0);
    const double sigma = diffusion ? std::sqrt(2.0 * u.at(t0) * h) : 0.0;
    const Points v0 = drift(rho, t0);
    if (config.integrator == Integrator::explicit_euler) {
      rho.positions += h * v0;
      stepper.add_noise(rho.positions, sigma, step);
      stepper.confine(rho.positions, step);
    } else {
      ParticleEnsemble pred = rho;
      pred.positions += h * v0;
      stepper.add_noise(pred.positions, sigma, step);
      stepper.confine(pred.positions, step);
      const Points v1 = drift(pred, t0 + h);
      rho.positions += 0.5 * h * (v0 + v1);
      stepper.add_noise(rho.positions, sigma, step);
      stepper.confine(rho.positions, step);
    }
    if (step % static_cast<std::size_t>(config.log_every) == 0 || step == steps) record(t0 + h, step);
  }
  result.final_state = std::move(rho);
  return result;
}

}  // namespace dissflow
