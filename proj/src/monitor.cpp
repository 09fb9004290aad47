#include "dissflow/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dissflow {

std::string Verdict::line() const {
  std::ostringstream s;
  s << name << ' ' << (pass ? "PASS" : "FAIL");
  s.precision(6);
  for (const auto& [k, v] : metrics) s << ' ' << k << '=' << v;
  if (!note.empty()) s << " note=\"" << note << '"';
  return s.str();
}

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - f.intercept - f.slope * x[k];
    ss += r * r;
  }
  f.residual = std::sqrt(ss / m);
  return f;
}

double sup(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

}  // namespace

// Decay ----------------------------------------------------------------------------------

Verdict DecayReport::verdict() const {
  return {"decay", pass, {{"fraction", fraction}, {"checked", static_cast<double>(rows.size())}}, {}};
}

DecayReport check_decay_condition(const TrajectoryLog& log, double lambda, double gamma_gain,
                                  const DecayOptions& opts) {
  log.validate();
  if (log.size() < 3) throw InvalidArgument("check_decay_condition: log needs at least 3 samples");
  if (!(lambda >= 0.0) || !(gamma_gain >= 0.0)) throw InvalidArgument("check_decay_condition: negative constant");
  DecayReport rep;
  for (std::size_t k = 1; k + 1 < log.size(); ++k) {
    const double span = log.times[k + 1] - log.times[k - 1];
    DecayRow row;
    row.t = log.times[k];
    row.vdot = (log.lyapunov[k + 1] - log.lyapunov[k - 1]) / span;
    const double w = log.w2_to_target[k];
    row.rhs = -0.5 * lambda * lambda * w * w + gamma_gain * log.pert_norm[k];
    const double noise = opts.vdot_se ? opts.noise_sigmas * opts.vdot_se(k, span) : 0.0;
    row.ok = row.vdot <= row.rhs + opts.slack * 0.5 * span * (std::abs(row.vdot) + std::abs(row.rhs)) + noise +
                              opts.abs_tol;
    rep.satisfied += row.ok ? 1 : 0;
    rep.rows.push_back(row);
  }
  rep.fraction = static_cast<double>(rep.satisfied) / static_cast<double>(rep.rows.size());
  rep.pass = rep.fraction >= opts.threshold;
  return rep;
}

std::function<double(std::size_t, double)> quadratic_diffusion_se(const TrajectoryLog& log, double modulus,
                                                                   Eigen::Index n) {
  if (!(modulus > 0.0) || n < 1) throw InvalidArgument("quadratic_diffusion_se: need modulus > 0 and n >= 1");
  return [u = log.u, v = log.lyapunov, modulus, n](std::size_t k, double span) {
    return std::sqrt(4.0 * modulus * std::max(0.0, u[k]) * std::max(0.0, v[k]) / (static_cast<double>(n) * span));
  };
}

// Envelope -------------------------------------------------------------------------------

GammaTemplate parse_gamma_template(const std::string& s) {
  if (s == "linear") return GammaTemplate::linear;
  if (s == "sqrt") return GammaTemplate::sqrt;
  if (s == "power") return GammaTemplate::power;
  throw InvalidArgument("unknown gamma template '" + s + "' (linear, sqrt, power)");
}

std::string to_string(GammaTemplate g) {
  switch (g) {
    case GammaTemplate::linear:
      return "linear";
    case GammaTemplate::sqrt:
      return "sqrt";
    case GammaTemplate::power:
      return "power";
  }
  return "?";
}

double DissEnvelope::gamma(double level) const { return level > 0.0 ? gain * std::pow(level, exponent) : 0.0; }

double DissEnvelope::beta(double r0, double t) const { return k * r0 * std::exp(-lambda * t); }

Verdict DissEnvelope::verdict() const {
  Verdict v{"envelope",
            valid,
            {{"lambda", lambda}, {"K", k}, {"gain", gain}, {"exponent", exponent}, {"domination", domination}},
            {}};
  for (const auto& d : diagnostics) v.note += (v.note.empty() ? "" : "; ") + d;
  return v;
}

std::vector<double> isotonic_increasing(const std::vector<double>& y, const std::vector<double>& w) {
  struct Block {
    double value, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < y.size(); ++k) {
    blocks.push_back({y[k], w.empty() ? 1.0 : w[k], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
      const Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      a.value = (a.value * a.weight + b.value * b.weight) / (a.weight + b.weight);
      a.weight += b.weight;
      a.count += b.count;
    }
  }
  std::vector<double> out;
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.value);
  return out;
}

DissEnvelope fit_envelope(const std::vector<TrajectoryLog>& logs, const EnvelopeOptions& opts) {
  if (logs.size() < 2) throw InvalidArgument("fit_envelope: needs runs at two or more disturbance levels");
  if (!(opts.plateau_fraction > 0.0 && opts.plateau_fraction < 1.0))
    throw InvalidArgument("fit_envelope: plateau fraction must lie in (0, 1)");
  DissEnvelope env;
  env.gamma_template = opts.gamma;
  env.slack = opts.slack;
  env.coverage = opts.coverage;

  std::vector<std::size_t> window_start(logs.size());
  for (std::size_t r = 0; r < logs.size(); ++r) {
    const TrajectoryLog& log = logs[r];
    log.validate();
    if (log.size() < 5) throw InvalidArgument("fit_envelope: every log needs at least 5 samples");
    const auto n = log.size();
    const auto m = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(opts.plateau_fraction * n)));
    window_start[r] = n - m;
    std::vector<double> tt(log.times.end() - static_cast<long>(m), log.times.end());
    std::vector<double> ww(log.w2_to_target.end() - static_cast<long>(m), log.w2_to_target.end());
    EnvelopeLevel lv;
    lv.level = sup(log.u);
    lv.w0 = log.w2_to_target.front();
    lv.plateau = std::accumulate(ww.begin(), ww.end(), 0.0) / static_cast<double>(m);
    double var = 0.0;
    for (double v : ww) var += (v - lv.plateau) * (v - lv.plateau);
    lv.plateau_se = std::sqrt(var / static_cast<double>(m * (m - 1)));
    const LineFit trend = fit_line(tt, ww);
    const double drift = std::abs(trend.slope) * (tt.back() - tt.front());
    lv.stationary = drift <= std::max(3.0 * trend.residual, 0.02 * lv.plateau) + opts.abs_tol;
    if (!lv.stationary) {
      std::ostringstream msg;
      msg << "run at level " << lv.level << " not stationary (drift " << drift << " over the plateau window)";
      env.diagnostics.push_back(msg.str());
    }
    env.levels.push_back(lv);
  }

  std::vector<std::size_t> order(logs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return env.levels[a].level < env.levels[b].level; });
  if (env.levels[order.front()].level == env.levels[order.back()].level)
    throw InvalidArgument("fit_envelope: needs two or more distinct disturbance levels");

  env.monotone = true;
  std::vector<double> sorted_plateaus;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const EnvelopeLevel& cur = env.levels[order[k]];
    sorted_plateaus.push_back(cur.plateau);
    if (k == 0) continue;
    const EnvelopeLevel& prev = env.levels[order[k - 1]];
    const double noise = 3.0 * std::hypot(cur.plateau_se, prev.plateau_se) + opts.abs_tol;
    if (cur.plateau < prev.plateau - noise) {
      env.monotone = false;
      std::ostringstream msg;
      msg << "plateau decreases from " << prev.plateau << " (level " << prev.level << ") to " << cur.plateau
          << " (level " << cur.level << "): dISS gain violated or runs not stationary";
      env.diagnostics.push_back(msg.str());
    }
  }
  const std::vector<double> iso = isotonic_increasing(sorted_plateaus);
  for (std::size_t k = 0; k < order.size(); ++k) env.levels[order[k]].monotone_plateau = iso[k];

  // Gain from the monotone plateaus at positive levels.
  std::vector<double> s, p;
  for (const auto& lv : env.levels) {
    if (lv.level > 0.0) {
      s.push_back(lv.level);
      p.push_back(lv.monotone_plateau);
    }
  }
  bool gain_ok = !s.empty();
  switch (opts.gamma) {
    case GammaTemplate::linear:
    case GammaTemplate::sqrt: {
      env.exponent = opts.gamma == GammaTemplate::linear ? 1.0 : 0.5;
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        const double b = std::pow(s[k], env.exponent);
        num += b * p[k];
        den += b * b;
      }
      env.gain = den > 0.0 ? num / den : 0.0;
      break;
    }
    case GammaTemplate::power: {
      std::vector<double> ls, lp;
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (p[k] > 0.0) {
          ls.push_back(std::log(s[k]));
          lp.push_back(std::log(p[k]));
        }
      }
      std::vector<double> uniq(ls);
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      if (uniq.size() < 2) {
        gain_ok = false;
        break;
      }
      const LineFit f = fit_line(ls, lp);
      env.exponent = f.slope;
      env.gain = std::exp(f.intercept);
      break;
    }
  }
  if (!gain_ok) env.diagnostics.push_back("too few positive disturbance levels to fit the gain");
  double gss = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double r = p[k] > 0.0 ? env.gamma(s[k]) / p[k] - 1.0 : env.gamma(s[k]);
    gss += r * r;
  }
  env.gain_residual = s.empty() ? 0.0 : std::sqrt(gss / static_cast<double>(s.size()));

  // Rate from the pooled transients; K is the smallest constant dominating
  // every transient sample at that rate.
  std::vector<double> tx, ly;
  for (std::size_t r = 0; r < logs.size(); ++r) {
    const TrajectoryLog& log = logs[r];
    const EnvelopeLevel& lv = env.levels[r];
    // gamma(0) = 0: undisturbed runs decay towards zero, whatever the
    // trailing window still shows.
    const double floor = lv.level > 0.0 ? lv.plateau : 0.0;
    const double gap0 = lv.w0 - floor;
    if (!(gap0 > opts.abs_tol) || lv.w0 <= 0.0) continue;
    for (std::size_t k = 0; k < window_start[r]; ++k) {
      const double gap = log.w2_to_target[k] - floor;
      if (gap > opts.transient_cut * gap0) {
        tx.push_back(log.times[k]);
        ly.push_back(std::log(gap / lv.w0));
      }
    }
  }
  bool rate_ok = tx.size() >= 3;
  if (rate_ok) {
    const LineFit f = fit_line(tx, ly);
    env.lambda = -f.slope;
    env.rate_residual = f.residual;
    double shift = f.intercept;
    for (std::size_t k = 0; k < tx.size(); ++k) shift = std::max(shift, ly[k] + env.lambda * tx[k]);
    env.k = std::exp(shift);
    if (!(env.lambda > 0.0)) {
      rate_ok = false;
      env.diagnostics.push_back("fitted decay rate is not positive");
    }
  } else {
    env.diagnostics.push_back("no usable transient samples for the decay rate");
  }

  std::size_t total = 0, dominated = 0;
  for (std::size_t r = 0; r < logs.size(); ++r) {
    const TrajectoryLog& log = logs[r];
    const EnvelopeLevel& lv = env.levels[r];
    for (std::size_t k = 0; k < log.size(); ++k) {
      ++total;
      const double b = (1.0 + opts.slack) * env.bound(lv.w0, log.times[k], lv.level) + opts.abs_tol;
      dominated += log.w2_to_target[k] <= b ? 1 : 0;
    }
  }
  env.domination = static_cast<double>(dominated) / static_cast<double>(total);
  if (env.domination < opts.coverage) {
    std::ostringstream msg;
    msg << "envelope dominates only " << env.domination << " of the samples";
    env.diagnostics.push_back(msg.str());
  }
  env.valid = env.monotone && gain_ok && rate_ok && env.domination >= opts.coverage;
  return env;
}

void apply_envelope(TrajectoryLog& log, const DissEnvelope& env) {
  if (log.size() == 0) return;
  const double level = sup(log.u);
  const double w0 = log.w2_to_target.front();
  for (std::size_t k = 0; k < log.size(); ++k) log.bound[k] = env.bound(w0, log.times[k], level);
}

// Markov ----------------------------------------------------------------------------------

Verdict MarkovReport::verdict() const {
  Verdict v{"markov", pass, {}, {}};
  for (const auto& r : rows) {
    std::ostringstream key;
    key << "exceedance@" << r.epsilon;
    v.metrics.emplace_back(key.str(), r.worst_exceedance);
  }
  return v;
}

MarkovReport markov_nss_check(const DistanceSamples& samples, const DissEnvelope& env,
                              const std::vector<double>& epsilons, double sigmas) {
  if (samples.times.size() != samples.squared_distances.size() || samples.times.empty())
    throw InvalidArgument("markov_nss_check: times and distance samples do not match");
  const auto n = static_cast<double>(samples.squared_distances.front().size());
  MarkovReport rep;
  rep.pass = true;
  for (double eps : epsilons) {
    if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("markov_nss_check: epsilon must lie in (0, 1]");
    if (n * eps < 20.0) {
      std::ostringstream msg;
      msg << "markov_nss_check: ensemble of " << n << " particles too small for epsilon = " << eps
          << " (needs N eps >= 20)";
      throw InvalidArgument(msg.str());
    }
    MarkovRow row;
    row.epsilon = eps;
    row.allowed = eps + sigmas * std::sqrt(eps * (1.0 - eps) / n);
    for (std::size_t k = 0; k < samples.times.size(); ++k) {
      const double thr =
          (1.0 + env.slack) * env.bound(samples.w0, samples.times[k], samples.level) / std::sqrt(eps);
      const Vector& d2 = samples.squared_distances[k];
      const auto over = (d2.array() > thr * thr).count();
      const double frac = static_cast<double>(over) / static_cast<double>(d2.size());
      if (k == 0 || frac > row.worst_exceedance) {
        row.worst_exceedance = frac;
        row.worst_time = samples.times[k];
      }
    }
    row.pass = row.worst_exceedance <= row.allowed;
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

// Sandwich -------------------------------------------------------------------------------

double PowerLaw::operator()(double r) const { return a * std::pow(r, p); }

void PowerLaw::validate() const {
  if (!(a > 0.0) || !(p >= 1.0)) throw InvalidArgument("comparison template needs a > 0 and p >= 1");
}

Verdict PositivityReport::verdict() const {
  return {"positivity",
          pass,
          {{"tightest_lower", tightest_lower}, {"tightest_upper", tightest_upper}, {"witness", static_cast<double>(witness)}},
          {}};
}

PositivityReport check_positivity_bounds(const TrajectoryLog& log, const PowerLaw& psi1, const PowerLaw& psi2,
                                         double rel_tol, double abs_tol) {
  psi1.validate();
  psi2.validate();
  log.validate();
  PositivityReport rep;
  rep.tightest_lower = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < log.size(); ++k) {
    const double w = log.w2_to_target[k];
    const double v = log.lyapunov[k];
    if (w > 0.0) {
      rep.tightest_lower = std::min(rep.tightest_lower, v / std::pow(w, psi1.p));
      rep.tightest_upper = std::max(rep.tightest_upper, v / std::pow(w, psi2.p));
    } else if (v > abs_tol) {
      rep.tightest_upper = std::numeric_limits<double>::infinity();
    }
    const bool lo = psi1(w) <= v * (1.0 + rel_tol) + abs_tol;
    const bool hi = v <= psi2(w) * (1.0 + rel_tol) + abs_tol;
    if ((!lo || !hi) && rep.witness < 0) rep.witness = static_cast<long>(k);
    rep.lower_ok = rep.lower_ok && lo;
    rep.upper_ok = rep.upper_ok && hi;
  }
  rep.pass = rep.lower_ok && rep.upper_ok;
  return rep;
}

double invariant_level(const PowerLaw& psi2, double lambda, double gamma_gain, double pert_sup) {
  psi2.validate();
  if (!(lambda > 0.0)) throw InvalidArgument("invariant_level: lambda must be positive");
  return psi2(std::sqrt(2.0 * gamma_gain * pert_sup) / lambda);
}

Verdict InvariantReport::verdict() const {
  return {"invariant",
          pass,
          {{"level", level}, {"entry_time", entry_time}, {"violations", static_cast<double>(violations)}},
          entered ? "" : "level never reached"};
}

InvariantReport check_invariant_level(const TrajectoryLog& log, double level, double slack, double abs_tol) {
  log.validate();
  InvariantReport rep;
  rep.level = level;
  for (std::size_t k = 0; k < log.size(); ++k) {
    const double v = log.lyapunov[k];
    if (!rep.entered) {
      if (v <= level) {
        rep.entered = true;
        rep.entry_time = log.times[k];
      }
      continue;
    }
    if (v > level * (1.0 + slack) + abs_tol) ++rep.violations;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

// Serialization -------------------------------------------------------------------------

void write_decay_csv(std::ostream& out, const DecayReport& report) {
  out << "t,Vdot,rhs,ok\n";
  out.precision(17);
  for (const auto& r : report.rows) out << r.t << ',' << r.vdot << ',' << r.rhs << ',' << (r.ok ? 1 : 0) << '\n';
  out << "# " << report.verdict().line() << '\n';
}

void write_envelope_csv(std::ostream& out, const DissEnvelope& env) {
  out << "level,W0,plateau,plateau_se,monotone_plateau,gamma_hat,stationary\n";
  out.precision(17);
  for (const auto& lv : env.levels)
    out << lv.level << ',' << lv.w0 << ',' << lv.plateau << ',' << lv.plateau_se << ',' << lv.monotone_plateau << ','
        << env.gamma(lv.level) << ',' << (lv.stationary ? 1 : 0) << '\n';
  out << "# template=" << to_string(env.gamma_template) << '\n';
  out << "# " << env.verdict().line() << '\n';
}

void write_markov_csv(std::ostream& out, const MarkovReport& report) {
  out << "epsilon,worst_exceedance,worst_time,allowed,pass\n";
  out.precision(17);
  for (const auto& r : report.rows)
    out << r.epsilon << ',' << r.worst_exceedance << ',' << r.worst_time << ',' << r.allowed << ','
        << (r.pass ? 1 : 0) << '\n';
  out << "# " << report.verdict().line() << '\n';
}

}  // namespace dissflow
