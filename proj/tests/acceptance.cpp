// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dissflow/demo.hpp"
#include "dissflow/experiment.hpp"
#include "dissflow/functionals.hpp"
#include "dissflow/kde.hpp"
#include "dissflow/monitor.hpp"
#include "dissflow/sdot.hpp"
#include "dissflow/sinkhorn.hpp"
#include "dissflow/transport.hpp"

using namespace dissflow;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::vector<std::pair<std::string, double>> metrics;
  std::string note;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ParticleEnsemble random_ensemble(const BoxDomain& dom, Eigen::Index n, std::mt19937_64& g) {
  Points p(n, dom.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < dom.dim(); ++k) p(i, k) = std::uniform_real_distribution<double>(dom.lower(k), dom.upper(k))(g);
  return {dom, p};
}

double brute_force_w2sq(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  std::vector<int> p(a.size());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) c += (a.positions.row(i) - b.positions.row(p[i])).squaredNorm();
    best = std::min(best, c / static_cast<double>(a.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// 1 ------------------------------------------------------------------------------
Outcome exact_ot() {
  auto t0 = Clock::now();
  std::mt19937_64 g(2024);
  BoxDomain line = BoxDomain::cube(1, -1.0, 1.0);
  double worst_1d = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Index n = 1 + static_cast<Eigen::Index>(g() % 512);
    auto a = random_ensemble(line, n, g), b = random_ensemble(line, n, g);
    worst_1d = std::max(worst_1d, std::abs(w2_assignment(a, b).plan.cost - w2_exact_1d(a, b).plan.cost));
  }
  double worst_bf = 0.0;
  BoxDomain plane = BoxDomain::cube(2, -1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Index n = 1 + static_cast<Eigen::Index>(g() % 6);
    bool one_d = trial % 2 == 0;
    auto a = random_ensemble(one_d ? line : plane, n, g), b = random_ensemble(one_d ? line : plane, n, g);
    double bf = brute_force_w2sq(a, b);
    worst_bf = std::max(worst_bf, std::abs(w2_assignment(a, b).plan.cost - bf));
    if (one_d) worst_bf = std::max(worst_bf, std::abs(w2_exact_1d(a, b).plan.cost - bf));
  }
  double secs = seconds_since(t0);
  // "Exactly" up to summation order of the same terms.
  return {worst_1d <= 1e-10 && worst_bf <= 1e-14 && secs < 10.0,
          {{"max_dev_1d", worst_1d}, {"max_dev_bruteforce", worst_bf}, {"seconds", secs}}};
}

// 2 ------------------------------------------------------------------------------
Outcome sinkhorn_accuracy() {
  auto t0 = Clock::now();
  const double sigma = 0.1;
  const Eigen::Index n = 5000;
  std::mt19937_64 g(77);
  std::normal_distribution<double> nd(0.0, sigma);
  Points pa(n, 1), pb(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    pa(i, 0) = nd(g);
    pb(i, 0) = 1.0 + nd(g);
  }
  BoxDomain dom = BoxDomain::cube(1, -1.0, 2.0);
  auto a = DiscreteMeasure::from_ensemble({dom, pa});
  auto b = DiscreteMeasure::from_ensemble({dom, pb});
  SinkhornOptions o;
  o.epsilon = 0.01 * sigma * sigma;
  o.tol = 1e-6;
  auto d = sinkhorn_divergence(a, b, o);
  double viol = std::max({d.ab.marginal_error, d.aa.marginal_error, d.bb.marginal_error});
  bool conv = d.ab.converged && d.aa.converged && d.bb.converged;
  double rel = std::abs(d.divergence - 1.0);
  double secs = seconds_since(t0);
  return {conv && rel <= 0.02 && viol < 1e-6 && secs < 30.0,
          {{"divergence", d.divergence}, {"rel_err", rel}, {"marginal_violation", viol}, {"seconds", secs}}};
}

// 3 and 10 share the OU runs --------------------------------------------------------
struct OuRuns {
  int dim = 1;
  std::vector<double> levels;
  std::vector<RunResult> runs;
  DissEnvelope envelope;
};

ExperimentConfig ou_config(int dim, double u) {
  std::ostringstream s;
  s << "[experiment]\nscenario = entropic-ou\nseed = " << 100 + dim << "\n[domain]\ndim = " << dim
    << "\n[particles]\nn = 10000\n[disturbance]\nkind = constant\nvalue = " << u << "\n";
  std::istringstream in(s.str());
  return parse_config(in);
}

std::vector<OuRuns> run_ou(double& secs) {
  auto t0 = Clock::now();
  std::vector<OuRuns> out;
  for (int dim : {1, 2}) {
    OuRuns r;
    r.dim = dim;
    std::vector<TrajectoryLog> logs;
    for (double u : {0.01, 0.02, 0.05}) {
      ExperimentConfig cfg = ou_config(dim, u);
      r.levels.push_back(u);
      r.runs.push_back(run_scenario(cfg, cfg.seed, true));
      logs.push_back(r.runs.back().log);
    }
    EnvelopeOptions eo;
    eo.gamma = GammaTemplate::power;
    r.envelope = fit_envelope(logs, eo);
    out.push_back(std::move(r));
  }
  secs = seconds_since(t0);
  return out;
}

double plateau_w2sq(const TrajectoryLog& log) {
  const std::size_t n = log.size(), m = std::max<std::size_t>(2, n / 5);
  double s = 0.0;
  for (std::size_t k = n - m; k < n; ++k) s += log.w2_to_target[k] * log.w2_to_target[k];
  return s / static_cast<double>(m);
}

Outcome ou_gain(const std::vector<OuRuns>& all, double secs) {
  Outcome o{true, {}, {}};
  double worst = 0.0;
  for (const auto& r : all) {
    for (std::size_t k = 0; k < r.levels.size(); ++k) {
      double expect = r.dim * r.levels[k];
      worst = std::max(worst, std::abs(plateau_w2sq(r.runs[k].log) - expect) / expect);
    }
    double e = r.envelope.exponent;
    o.metrics.emplace_back("exponent_d" + std::to_string(r.dim), e);
    o.pass = o.pass && std::abs(e - 0.5) <= 0.1;
  }
  o.metrics.insert(o.metrics.begin(), {"max_rel_plateau_err", worst});
  o.metrics.emplace_back("seconds", secs);
  o.pass = o.pass && worst <= 0.15 && secs < 120.0;
  return o;
}

Outcome markov(const std::vector<OuRuns>& all) {
  Outcome o{true, {}, {}};
  double worst_margin = -1.0;
  for (const auto& r : all)
    for (const auto& run : r.runs) {
      auto rep = markov_nss_check(*run.samples, r.envelope, {0.05, 0.1});
      o.pass = o.pass && rep.pass;
      for (const auto& row : rep.rows) worst_margin = std::max(worst_margin, row.worst_exceedance - row.allowed);
    }
  o.metrics.emplace_back("max_exceedance_minus_allowed", worst_margin);
  return o;
}

// 4 ------------------------------------------------------------------------------
Outcome decay() {
  Outcome o{true, {}, {}};
  for (double u : {0.05, 0.1, 0.2}) {
    std::ostringstream s;
    s << "[experiment]\nscenario = potential-flow\nseed = 5\n[flow]\ndt = 0.001\nt_end = 5\nlog_every = 10\n"
         "[disturbance]\nkind = constant\nvalue = "
      << u << "\n";
    std::istringstream in(s.str());
    ExperimentConfig cfg = parse_config(in);
    RunResult r = run_scenario(cfg, cfg.seed);
    auto rep = check_decay_condition(r.log, cfg.modulus, 0.5);
    o.pass = o.pass && rep.fraction >= 0.99;
    std::ostringstream key;
    key << "fraction@u=" << u;
    o.metrics.emplace_back(key.str(), rep.fraction);
  }
  return o;
}

// 5, 6, 7 ------------------------------------------------------------------------------
Outcome sdot_scaling() {
  auto t0 = Clock::now();
  SdotFlowOptions opts;
  GridDensity line = uniform_density(GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 4096));
  std::vector<Eigen::Index> n1{4, 8, 16, 32, 64};
  auto q1 = quantization_sweep(line, n1, opts, 31);
  double worst = 0.0;
  std::vector<double> x1, y1;
  for (std::size_t k = 0; k < n1.size(); ++k) {
    double floor = 1.0 / (12.0 * n1[k] * n1[k]);
    worst = std::max(worst, q1.converged[k] ? std::abs(q1.energies[k] - floor) / floor : 1.0);
    x1.push_back(static_cast<double>(n1[k]));
    y1.push_back(q1.energies[k]);
  }
  double slope1 = loglog_slope(x1, y1);

  GridDensity square = uniform_density(GridLayout::uniform(BoxDomain::cube(2, 0.0, 1.0), 256));
  std::vector<Eigen::Index> n2{16, 32, 64, 128, 256};
  auto q2 = quantization_sweep(square, n2, opts, 32);
  std::vector<double> x2, y2;
  bool all2 = true;
  for (std::size_t k = 0; k < n2.size(); ++k) {
    all2 = all2 && q2.converged[k];
    x2.push_back(static_cast<double>(n2[k]));
    y2.push_back(q2.energies[k]);
  }
  double slope2 = loglog_slope(x2, y2);
  double secs = seconds_since(t0);
  return {worst <= 0.05 && std::abs(slope1 + 2.0) <= 0.1 && all2 && std::abs(slope2 + 1.0) <= 0.2 && secs < 300.0,
          {{"max_rel_err_1d", worst}, {"slope_1d", slope1}, {"slope_2d", slope2}, {"seconds", secs}}};
}

SdotRun sdot_1d_run() {
  GridDensity line = uniform_density(GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 4096));
  SdotFlowOptions opts;
  return run_sdot_flow(initial_sites(line, 16, 61), line, opts);
}

Outcome sdot_decomposition(const SdotRun& run) {
  double worst = 0.0;
  for (const auto& e : run.energies) worst = std::max(worst, std::abs(e.energy - e.bias - e.variance) / e.energy);
  return {worst <= 1e-6, {{"max_rel_defect", worst}, {"steps", static_cast<double>(run.energies.size())}}};
}

Outcome sdot_envelope(const SdotRun& run) {
  const double floor = 1.0 / (12.0 * 16.0 * 16.0);
  const double gap0 = run.energies.front().energy - floor;
  double worst = 0.0;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    double env = gap0 * std::exp(-2.0 * run.times[k]);
    double gap = run.energies[k].energy - floor;
    if (env > 0.0) worst = std::max(worst, gap / env);
  }
  return {worst <= 1.1, {{"max_gap_over_envelope", worst}, {"slack", 0.1}}};
}

// 8 ------------------------------------------------------------------------------
Outcome kde_bound() {
  std::mt19937_64 g(808);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<Eigen::Index> ns{100, 1000, 10000};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 2;
    const Eigen::Index n = ns[(trial / 2) % 3];
    const double c = 0.3 + 0.5 * unif(g);
    const double l = 0.5 + 2.5 * unif(g);
    std::vector<double> center(d);
    for (double& x : center) x = 0.2 + 0.6 * unif(g);
    KernelSpec k{trial % 4 < 2 ? KernelFamily::gaussian : KernelFamily::epanechnikov, bandwidth_rule(n, c, d), d};
    BoxDomain dom = BoxDomain::cube(d, 0.0, 1.0);
    const int cells = static_cast<int>(std::ceil(2.0 / k.bandwidth)) + 1;
    GridLayout grid = GridLayout::uniform(dom, std::max(cells, d == 1 ? 512 : 64));
    ParticleEnsemble z = (trial % 3 == 0) ? sample_uniform(dom, n, g())
                                          : sample_density(gaussian_density(grid, center, 0.15), n, g());
    auto ideal = [l, center](const Points& x) -> Points {
      Points v = x;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) v(i, j) = l * (x(i, j) - center[j]);
      return v;
    };
    auto field = nadaraya_velocity(z, k, grid, std::function<Points(const Points&)>(ideal));
    double measured = nadaraya_error_l2(field, grid, ideal);
    worst = std::max(worst, measured / kde_perturbation_bound(l, k));
  }
  Outcome o{worst <= 1.0, {{"max_error_over_bound", worst}}, {}};
  for (int d : {1, 2}) {
    KernelSpec k{KernelFamily::gaussian, 0.0, d};
    std::vector<double> x, y;
    for (Eigen::Index n : ns) {
      k.bandwidth = bandwidth_rule(n, 0.5, d);
      x.push_back(static_cast<double>(n));
      y.push_back(kde_perturbation_bound(1.0, k));
    }
    double s = loglog_slope(x, y);
    o.metrics.emplace_back("slope_d" + std::to_string(d), s);
    o.pass = o.pass && std::abs(s + 2.0 / (d + 2.0)) <= 0.05;
  }
  return o;
}

// 9 ------------------------------------------------------------------------------
Outcome fig5() {
  auto t0 = Clock::now();
  auto u = run_sweep(load_config("configs/fig5_u.ini"));
  auto n = run_sweep(load_config("configs/fig5_n.ini"));
  double secs = seconds_since(t0);
  return {u.spearman >= 0.9 && n.spearman <= -0.9 && secs < 600.0,
          {{"spearman_u", u.spearman}, {"spearman_N", n.spearman}, {"seconds", secs}}};
}

// 11 -----------------------------------------------------------------------------
Outcome checkers() {
  std::mt19937_64 g(1111);
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  std::vector<ParticleEnsemble> samples;
  std::vector<std::pair<ParticleEnsemble, ParticleEnsemble>> pairs;
  for (int i = 0; i < 100; ++i) {
    samples.push_back(random_ensemble(dom, 20, g));
    pairs.emplace_back(random_ensemble(dom, 20, g), random_ensemble(dom, 20, g));
  }
  FunctionalSpec f{quadratic_potential({0.0, 0.0}, 1.0), 1.0, 1.0};
  TargetSet delta0{PointSet{Points::Zero(1, 2)}};
  auto growth = check_quadratic_growth(f, samples, delta0);
  auto dom_rep = check_gradient_dominance(f, samples, delta0);
  auto smooth = check_l_smoothness(f, pairs);
  double smooth_min = 1.0;
  for (const auto& r : smooth.rows)
    if (!r.skipped) smooth_min = std::min(smooth_min, r.ratio);
  auto within = [](double v) { return std::abs(v - 1.0) <= 1e-6; };
  return {within(growth.modulus) && within(dom_rep.modulus) && within(smooth.modulus) && within(smooth_min),
          {{"growth", growth.modulus}, {"dominance", dom_rep.modulus}, {"smoothness_max", smooth.modulus},
           {"smoothness_min", smooth_min}}};
}

// 12 -----------------------------------------------------------------------------
Outcome demos() {
  auto bump = bump_discrimination();
  auto interp = gaussian_interpolation();
  bool ordered = bump.rows.size() == 2 && bump.rows[0].w2 > bump.rows[1].w2;
  return {bump.l2_spread <= 1e-10 && ordered && interp.pass,
          {{"l2_spread", bump.l2_spread},
           {"w2_far", bump.rows[0].w2},
           {"w2_near", bump.rows[1].w2},
           {"modes_displacement", interp.displacement_modes},
           {"modes_linear", interp.linear_modes}}};
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note = e.what();
    }
    all = all && o.pass;
    std::cout << "criterion " << std::setw(2) << id << ' ' << name << ' ' << (o.pass ? "PASS" : "FAIL");
    for (const auto& [k, v] : o.metrics) std::cout << ' ' << k << '=' << std::setprecision(6) << v;
    if (!o.note.empty()) std::cout << " note=\"" << o.note << '"';
    std::cout << std::endl;
  };

  report(1, "exact-ot", exact_ot);
  report(2, "sinkhorn-accuracy", sinkhorn_accuracy);

  double ou_secs = 0.0;
  std::vector<OuRuns> ou;
  std::string ou_error;
  try {
    ou = run_ou(ou_secs);
  } catch (const std::exception& e) {
    ou_error = e.what();
  }
  auto need_ou = [&] {
    if (!ou_error.empty()) throw std::runtime_error(ou_error);
  };
  report(3, "ou-gain", [&] {
    need_ou();
    return ou_gain(ou, ou_secs);
  });
  report(4, "decay-inequality", decay);
  report(5, "sdot-scaling", sdot_scaling);
  SdotRun run;
  std::string sdot_error;
  try {
    run = sdot_1d_run();
  } catch (const std::exception& e) {
    sdot_error = e.what();
  }
  report(6, "sdot-decomposition", [&] {
    if (!sdot_error.empty()) throw std::runtime_error(sdot_error);
    return sdot_decomposition(run);
  });
  report(7, "sdot-envelope", [&] {
    if (!sdot_error.empty()) throw std::runtime_error(sdot_error);
    return sdot_envelope(run);
  });
  report(8, "kde-bound", kde_bound);
  report(9, "fig5-sweeps", fig5);
  report(10, "markov", [&] {
    need_ou();
    return markov(ou);
  });
  report(11, "checkers", checkers);
  report(12, "demo-figures", demos);
  std::cout << (all ? "ALL PASS" : "SOME FAILED") << std::endl;
  return all ? 0 : 1;
}
