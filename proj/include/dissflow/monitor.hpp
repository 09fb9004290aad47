#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dissflow/measures.hpp"
#include "dissflow/trajectory.hpp"

namespace dissflow {

/// One-line machine-readable outcome: "<name> PASS key=value ...".
struct Verdict {
  std::string name;
  bool pass = false;
  std::vector<std::pair<std::string, double>> metrics;
  std::string note;

  std::string line() const;
};

// Decay inequality ------------------------------------------------------------------

struct DecayOptions {
  double threshold = 0.99;
  /// Multiplier of the O(dt) allowance slack * dt * (|Vdot| + |rhs|).
  double slack = 1.0;
  double abs_tol = 1e-12;
  /// Standard error of the finite-difference Vdot at sample k over `span`
  /// for stochastic runs (finite-N martingale noise); unset when the flow is
  /// deterministic.
  std::function<double(std::size_t k, double span)> vdot_se;
  double noise_sigmas = 3.0;
};

/// Standard error of Vdot for an ensemble of n particles under diffusion
/// sqrt(2u) dW on the quadratic potential (m/2)|x - c|^2: the martingale part
/// of V has variance 2 u E|grad phi|^2 dt / n with E|grad phi|^2 = 2 m V.
std::function<double(std::size_t, double)> quadratic_diffusion_se(const TrajectoryLog& log, double modulus,
                                                                   Eigen::Index n);

struct DecayRow {
  double t = 0.0;
  double vdot = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  std::size_t satisfied = 0;
  double fraction = 0.0;
  bool pass = false;
  Verdict verdict() const;
};

/// Central-difference Vdot at interior samples against
///   -1/2 lambda^2 W2^2 + gamma_gain * pert_norm.
DecayReport check_decay_condition(const TrajectoryLog& log, double lambda, double gamma_gain = 0.5,
                                  const DecayOptions& opts = {});

// Envelope fit -----------------------------------------------------------------------

enum class GammaTemplate { linear, sqrt, power };
GammaTemplate parse_gamma_template(const std::string& s);
std::string to_string(GammaTemplate g);

struct EnvelopeOptions {
  GammaTemplate gamma = GammaTemplate::power;
  /// Trailing fraction of samples averaged into the plateau.
  double plateau_fraction = 0.2;
  double slack = 0.05;
  double coverage = 0.99;
  /// Transient samples used for the rate fit must exceed the plateau by this
  /// fraction of the initial gap.
  double transient_cut = 0.05;
  double abs_tol = 1e-9;
};

struct EnvelopeLevel {
  /// sup_t u(t) of the run.
  double level = 0.0;
  double w0 = 0.0;
  double plateau = 0.0;
  /// Standard error of the plateau mean.
  double plateau_se = 0.0;
  /// Plateau after isotonic regression across levels.
  double monotone_plateau = 0.0;
  bool stationary = false;
};

/// W2(t) <= K W2(0) e^{-lambda t} + gamma(||u||), fitted across runs.
struct DissEnvelope {
  GammaTemplate gamma_template = GammaTemplate::power;
  double lambda = 0.0;
  double k = 0.0;
  double gain = 0.0;
  /// 1 for linear, 0.5 for sqrt, fitted for power.
  double exponent = 1.0;
  double slack = 0.05;
  std::vector<EnvelopeLevel> levels;
  /// Fraction of samples dominated by (1 + slack) times the envelope.
  double domination = 0.0;
  double coverage = 0.99;
  double rate_residual = 0.0;
  double gain_residual = 0.0;
  bool monotone = false;
  bool valid = false;
  std::vector<std::string> diagnostics;

  double gamma(double level) const;
  double beta(double r0, double t) const;
  double bound(double r0, double t, double level) const { return beta(r0, t) + gamma(level); }
  Verdict verdict() const;
};

/// Pool-adjacent-violators fit of a nondecreasing sequence.
std::vector<double> isotonic_increasing(const std::vector<double>& y, const std::vector<double>& w = {});

/// Needs at least two distinct disturbance levels. Rejected fits (non-monotone
/// plateaus, no usable transient, lambda <= 0) come back with valid = false
/// and a diagnostic.
DissEnvelope fit_envelope(const std::vector<TrajectoryLog>& logs, const EnvelopeOptions& opts = {});

/// Fills log.bound with the envelope evaluated along the run.
void apply_envelope(TrajectoryLog& log, const DissEnvelope& env);

// Markov check ------------------------------------------------------------------------

/// Per-particle dist^2(x_t, M) at the logged times of one run.
struct DistanceSamples {
  std::vector<double> times;
  std::vector<Vector> squared_distances;
  double w0 = 0.0;
  double level = 0.0;
};

struct MarkovRow {
  double epsilon = 0.0;
  double worst_exceedance = 0.0;
  double worst_time = 0.0;
  double allowed = 0.0;
  bool pass = false;
};

struct MarkovReport {
  std::vector<MarkovRow> rows;
  bool pass = false;
  Verdict verdict() const;
};

/// Fraction of particles with dist > (1 + slack)(beta + gamma) / sqrt(eps) at
/// every logged time against eps + sigmas * sqrt(eps (1 - eps) / N).
MarkovReport markov_nss_check(const DistanceSamples& samples, const DissEnvelope& env,
                              const std::vector<double>& epsilons, double sigmas = 3.0);

// Sandwich and invariant level -----------------------------------------------------

/// psi(r) = a r^p with a > 0, p >= 1.
struct PowerLaw {
  double a = 0.5;
  double p = 2.0;
  double operator()(double r) const;
  void validate() const;
};

struct PositivityReport {
  bool lower_ok = true;
  bool upper_ok = true;
  /// Largest feasible a for psi1 and smallest feasible a for psi2.
  double tightest_lower = 0.0;
  double tightest_upper = 0.0;
  /// Index of the first violating sample, or -1.
  long witness = -1;
  bool pass = false;
  Verdict verdict() const;
};

PositivityReport check_positivity_bounds(const TrajectoryLog& log, const PowerLaw& psi1, const PowerLaw& psi2,
                                         double rel_tol = 1e-9, double abs_tol = 1e-12);

/// psi2(chi^{-1}(gamma)) with chi(r) = 1/2 lambda^2 r^2 and gamma = gain * pert.
double invariant_level(const PowerLaw& psi2, double lambda, double gamma_gain, double pert_sup);

struct InvariantReport {
  double level = 0.0;
  bool entered = false;
  double entry_time = 0.0;
  std::size_t violations = 0;
  bool pass = false;
  Verdict verdict() const;
};

/// Once V <= level it must stay below level (1 + slack) + abs_tol.
InvariantReport check_invariant_level(const TrajectoryLog& log, double level, double slack = 0.05,
                                      double abs_tol = 1e-12);

// Serialization ---------------------------------------------------------------------

void write_decay_csv(std::ostream& out, const DecayReport& report);
void write_envelope_csv(std::ostream& out, const DissEnvelope& env);
void write_markov_csv(std::ostream& out, const MarkovReport& report);

}  // namespace dissflow
