#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "dissflow/experiment.hpp"
#include "dissflow/rng.hpp"
#include "dissflow/sinkhorn.hpp"

namespace dissflow {

namespace {

std::vector<double> default_direction(const ExperimentConfig& cfg) {
  if (!cfg.zeta.empty()) return cfg.zeta;
  std::vector<double> z(static_cast<std::size_t>(cfg.dim), 0.0);
  z[0] = 1.0;
  return z;
}

std::vector<double> point_center(const ExperimentConfig& cfg) {
  const auto set = std::get<PointSet>(target_set(cfg));
  return std::vector<double>(set.points.row(0).data(), set.points.row(0).data() + cfg.dim);
}

double default_lambda(const ExperimentConfig& cfg) {
  if (cfg.monitor.lambda) return *cfg.monitor.lambda;
  return cfg.scenario == Scenario::potential_flow || cfg.scenario == Scenario::entropic_ou ? cfg.modulus : 1.0;
}

DecayOptions decay_options(const ExperimentConfig& cfg, const TrajectoryLog& log) {
  DecayOptions d;
  d.threshold = cfg.monitor.threshold;
  if (cfg.scenario == Scenario::entropic_ou) d.vdot_se = quadratic_diffusion_se(log, cfg.modulus, cfg.n);
  return d;
}

Probes base_probes(std::uint64_t seed) {
  Probes p;
  p.distance.resample_seed = derive_seed(seed, "distance");
  return p;
}

void attach_samples(Probes& probes, const PointSet& set, std::optional<DistanceSamples>& samples) {
  samples = DistanceSamples{};
  probes.on_log = [&samples, set](const ParticleEnsemble& rho, double t, std::size_t) {
    samples->times.push_back(t);
    samples->squared_distances.push_back(squared_distances_to_set(rho, set));
  };
}

RunResult run_quadratic(const ExperimentConfig& cfg, std::uint64_t seed, bool keep_samples) {
  const std::vector<double> center = point_center(cfg);
  FunctionalSpec f;
  f.kind = quadratic_potential(center, cfg.modulus);
  f.lambda = cfg.modulus;
  f.l_smooth = cfg.modulus;
  PerturbationField pert;
  if (cfg.scenario == Scenario::potential_flow) {
    const std::vector<double> dir = default_direction(cfg);
    VelocityField zeta;
    zeta.provenance = "constant";
    zeta.evaluate = [dir](const ParticleEnsemble& rho, double) {
      Points z(rho.size(), rho.dim());
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (int k = 0; k < rho.dim(); ++k) z(i, k) = dir[static_cast<std::size_t>(k)];
      return z;
    };
    pert = PerturbationField::additive_field(zeta);
  } else {
    pert = PerturbationField::isotropic_diffusion(kde_surrogate(cfg.kernel->spec(cfg.n, cfg.dim), cfg.grid()));
  }
  const VelocityField drift = make_perturbed_gradient_flow(f, pert, cfg.disturbance);
  Probes probes = base_probes(seed);
  const PointSet set = std::get<PointSet>(target_set(cfg));
  probes.target = set;
  probes.lyapunov = f;
  RunResult r;
  if (keep_samples) attach_samples(probes, set, r.samples);
  FlowConfig fc = cfg.flow;
  fc.seed = seed;
  if (!fc.lipschitz) fc.lipschitz = cfg.modulus;
  FlowResult fr = integrate(initial_ensemble(cfg, derive_seed(seed, "init")), drift, pert, cfg.disturbance, fc, probes);
  r.log = std::move(fr.log);
  r.final_state = std::move(fr.final_state);
  if (r.samples) {
    r.samples->w0 = r.log.w2_to_target.front();
    r.samples->level = cfg.disturbance.sup_norm();
  }
  return r;
}

RunResult run_regularized_ot(const ExperimentConfig& cfg, std::uint64_t seed) {
  OtToTarget ot;
  ot.target = target_ensemble(target_density(cfg), cfg.domain(), cfg.n, derive_seed(seed, "target"));
  ot.distance.resample_seed = derive_seed(seed, "distance");
  FunctionalSpec f;
  f.kind = ot;
  f.lambda = 1.0;
  const PerturbationField pert = PerturbationField::entropic_regularization(ot);
  const VelocityField drift = make_perturbed_gradient_flow(f, pert, cfg.disturbance);
  Probes probes = base_probes(seed);
  probes.target = ot.target;
  probes.lyapunov = f;
  FlowConfig fc = cfg.flow;
  fc.seed = seed;
  FlowResult fr = integrate(initial_ensemble(cfg, derive_seed(seed, "init")), drift, pert, cfg.disturbance, fc, probes);
  RunResult r;
  r.log = std::move(fr.log);
  r.final_state = std::move(fr.final_state);
  return r;
}

/// Square root of the debiased divergence between the KDE of the agents and
/// the target, both on the config grid.
double kde_w2(const GridDensity& kde, const DiscreteMeasure& target, double eps) {
  SinkhornOptions o;
  o.epsilon = eps;
  const SinkhornDivergence s = sinkhorn_divergence(DiscreteMeasure::from_grid(kde), target, o);
  require_converged(s.ab, "kde W2 measurement");
  return std::sqrt(std::max(0.0, s.divergence));
}

RunResult run_kde_sinkhorn(const ExperimentConfig& cfg, std::uint64_t seed) {
  const GridLayout grid = cfg.grid();
  const KernelSpec kernel = cfg.kernel->spec(cfg.n, cfg.dim);
  const DiscreteMeasure target = DiscreteMeasure::from_grid(target_density(cfg));
  const Points centers = grid.centers();
  const double scale = cfg.scale_by_n ? 1.0 / static_cast<double>(cfg.n) : 1.0;
  auto warm = std::make_shared<std::optional<EntropicPotentials>>();
  auto last_eps = std::make_shared<double>(-1.0);
  const DisturbanceSignal u = cfg.disturbance;

  VelocityField drift;
  drift.provenance = "kde-sinkhorn";
  drift.evaluate = [=](const ParticleEnsemble& rho, double t) {
    const GridDensity kde = kde_evaluate(rho, kernel, grid);
    SinkhornOptions o;
    o.epsilon = u.at(t);
    o.tol = cfg.velocity_tol;
    const DiscreteMeasure src = DiscreteMeasure::from_grid(kde);
    const EntropicPotentials* start = (*warm && *last_eps == o.epsilon) ? &**warm : nullptr;
    EntropicPotentials pot = sinkhorn(src, target, o, start);
    require_converged(pot, "kde-sinkhorn velocity");
    const Points grad = centers - grid_barycentric_projection(src, pot, target);
    *warm = std::move(pot);
    *last_eps = o.epsilon;
    const KernelGridWeights weights(rho.positions, kernel, grid);
    Points v = Points::Zero(rho.size(), rho.dim());
    for (Eigen::Index i = 0; i < rho.size(); ++i)
      weights.for_each(i, [&](Eigen::Index cell, double w) { v.row(i) -= w * grad.row(cell); });
    return Points(scale * v);
  };

  std::vector<double> w2;
  Probes probes = base_probes(seed);
  probes.log_perturbation_norm = false;
  probes.on_log = [&](const ParticleEnsemble& rho, double, std::size_t) {
    w2.push_back(kde_w2(kde_evaluate(rho, kernel, grid), target, cfg.measure_epsilon));
  };
  FlowConfig fc = cfg.flow;
  fc.seed = seed;
  FlowResult fr = integrate(initial_ensemble(cfg, derive_seed(seed, "init")), drift, PerturbationField::none(),
                            cfg.disturbance, fc, probes);
  RunResult r;
  r.log = std::move(fr.log);
  r.final_state = std::move(fr.final_state);
  for (std::size_t k = 0; k < w2.size(); ++k) {
    r.log.w2_to_target[k] = w2[k];
    r.log.lyapunov[k] = 0.5 * w2[k] * w2[k];
  }
  return r;
}

double plateau_of(const TrajectoryLog& log) {
  const auto n = log.size();
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(n))));
  double s = 0.0;
  for (std::size_t k = n - m; k < n; ++k) s += log.w2_to_target[k];
  return s / static_cast<double>(m);
}

std::string write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << body;
  return git_blob_hash(body);
}

/// Body of a CSV file with a fixed header; schema check on re-read.
void require_header(const std::string& body, const std::string& header) {
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line) && !line.empty() && line[0] == '#') {
  }
  if (line != header) throw NumericalError("schema check failed: expected header '" + header + "'");
  const auto cols = std::count(header.begin(), header.end(), ',');
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (std::count(line.begin(), line.end(), ',') != cols)
      throw NumericalError("schema check failed: row with wrong column count under '" + header + "'");
  }
}

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;

  void add(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
    files.emplace_back(name, write_file(dir / name, body));
  }
};

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Artifacts& art,
                    const std::vector<std::string>& extra = {}) {
  std::ostringstream m;
  m << "dissflow " << kVersion << '\n';
  m << "scenario = " << to_string(cfg.scenario) << '\n';
  m << "config_hash = " << cfg.hash() << '\n';
  m << "seed = " << cfg.seed << '\n';
  for (const auto& e : extra) m << e << '\n';
  m << "[config]\n";
  for (const auto& [k, v] : cfg.echo) m << k << " = " << v << '\n';
  m << "[effective]\n";
  for (const auto& [k, v] : cfg.effective()) m << k << " = " << v << '\n';
  m << "[files]\n";
  for (const auto& [name, hash] : art.files) m << hash << "  " << name << '\n';
  write_file(dir / "manifest.txt", m.str());
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& cfg, RunResult& r, Artifacts& art) {
  std::filesystem::create_directories(dir);
  r.log.config_hash = cfg.hash();
  std::ostringstream traj;
  write_trajectory_csv(traj, r.log);
  {
    std::istringstream check(traj.str());
    read_trajectory_csv(check);
  }
  art.add(dir, "trajectory.csv", traj.str());
  std::ostringstream pos;
  write_ensemble_csv(pos, r.final_state);
  art.add(dir, "final_positions.csv", pos.str());
}

RunResult run_and_certify(const ExperimentConfig& cfg, std::uint64_t seed, bool keep_samples) {
  RunResult r = run_scenario(cfg, seed, keep_samples);
  r.final_w2 = r.log.w2_to_target.back();
  return r;
}

}  // namespace

RunResult run_scenario(const ExperimentConfig& cfg, std::uint64_t seed, bool keep_samples) {
  cfg.validate();
  RunResult r;
  switch (cfg.scenario) {
    case Scenario::potential_flow:
    case Scenario::entropic_ou:
      r = run_quadratic(cfg, seed, keep_samples);
      break;
    case Scenario::regularized_ot:
      r = run_regularized_ot(cfg, seed);
      break;
    case Scenario::kde_sinkhorn:
      r = run_kde_sinkhorn(cfg, seed);
      break;
    case Scenario::sdot:
      throw InvalidArgument("run_scenario: the sdot scenario runs through the sdot subcommand");
  }
  r.final_w2 = r.log.w2_to_target.back();
  if (cfg.scenario != Scenario::kde_sinkhorn) {
    r.verdicts.push_back(
        check_decay_condition(r.log, default_lambda(cfg), cfg.monitor.gamma_gain, decay_options(cfg, r.log)).verdict());
  }
  return r;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& outdir) {
  if (!cfg.sweep) throw InvalidArgument("sweep: config has no [sweep] section");
  const SweepConfig& sw = *cfg.sweep;
  std::vector<double> values = sw.values;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  struct Child {
    std::size_t value_index;
    int seed_index;
    ExperimentConfig cfg;
    std::uint64_t seed;
    RunResult result;
    std::exception_ptr error;
  };
  std::vector<Child> children;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (int s = 0; s < sw.seeds; ++s) {
      ExperimentConfig c = cfg;
      c.sweep.reset();
      std::ostringstream val;
      val << values[i];
      if (sw.axis == "u") {
        c.disturbance = DisturbanceSignal::constant(values[i]);
        c.echo["disturbance.kind"] = "constant";
        c.echo["disturbance.value"] = val.str();
      } else if (sw.axis == "N") {
        c.n = static_cast<Eigen::Index>(std::llround(values[i]));
        c.echo["particles.n"] = val.str();
      } else {
        c.measure_epsilon = values[i];
        c.echo["kde.measure_epsilon"] = val.str();
      }
      c.validate();
      const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
      c.seed = seed;
      c.echo["experiment.seed"] = std::to_string(seed);
      children.push_back({i, s, std::move(c), seed, {}, nullptr});
    }
  }
  const bool markov = sw.axis == "u" && cfg.target.kind == "point";
  unsigned workers = sw.workers > 0 ? static_cast<unsigned>(sw.workers) : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(children.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t k = next++; k < children.size(); k = next++) {
      try {
        children[k].result = run_and_certify(children[k].cfg, children[k].seed, markov);
      } catch (...) {
        children[k].error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& c : children)
    if (c.error) std::rethrow_exception(c.error);

  SweepResult res;
  res.axis = sw.axis;
  std::vector<TrajectoryLog> logs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepPoint p;
    p.axis_value = values[i];
    for (const auto& c : children) {
      if (c.value_index != i) continue;
      p.final_w2.push_back(c.result.final_w2);
      p.plateau.push_back(plateau_of(c.result.log));
      logs.push_back(c.result.log);
    }
    p.mean_final_w2 = std::accumulate(p.final_w2.begin(), p.final_w2.end(), 0.0) / static_cast<double>(p.final_w2.size());
    p.mean_plateau = std::accumulate(p.plateau.begin(), p.plateau.end(), 0.0) / static_cast<double>(p.plateau.size());
    res.points.push_back(std::move(p));
  }
  if (values.size() >= 2) {
    std::vector<double> ax, fw;
    for (const auto& p : res.points) {
      ax.push_back(p.axis_value);
      fw.push_back(p.mean_final_w2);
    }
    res.spearman = spearman(ax, fw);
  }
  if (sw.axis == "u" && values.size() >= 2 && cfg.scenario != Scenario::kde_sinkhorn) {
    EnvelopeOptions eo;
    eo.gamma = cfg.monitor.gamma;
    res.envelope = fit_envelope(logs, eo);
  }

  if (outdir) {
    for (auto& c : children) {
      std::ostringstream name;
      name << sw.axis << '_' << values[c.value_index];
      const std::filesystem::path dir = *outdir / name.str() / ("seed_" + std::to_string(c.seed_index));
      Artifacts art;
      if (res.envelope) apply_envelope(c.result.log, *res.envelope);
      write_run(dir, c.cfg, c.result, art);
      std::vector<std::string> verdicts;
      for (const auto& v : c.result.verdicts) verdicts.push_back("verdict " + v.line());
      if (markov && res.envelope && c.result.samples) {
        std::vector<double> eps;
        for (double e : cfg.monitor.epsilons)
          if (static_cast<double>(c.cfg.n) * e >= 20.0) eps.push_back(e);
        if (!eps.empty()) {
          const MarkovReport mr = markov_nss_check(*c.result.samples, *res.envelope, eps);
          std::ostringstream mcsv;
          write_markov_csv(mcsv, mr);
          art.add(dir, "markov.csv", mcsv.str());
          c.result.verdicts.push_back(mr.verdict());
          verdicts.push_back("verdict " + mr.verdict().line());
        }
      }
      write_manifest(dir, c.cfg, art, verdicts);
    }
  }
  return res;
}

// Commands -------------------------------------------------------------------------------

int simulate_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out) {
  if (cfg.scenario == Scenario::sdot) return sdot_command(cfg, outdir, out);
  std::filesystem::create_directories(outdir);
  std::filesystem::remove(outdir / "FAILED");
  RunResult r = run_and_certify(cfg, cfg.seed, false);
  Artifacts art;
  write_run(outdir, cfg, r, art);
  bool pass = true;
  std::vector<std::string> lines;
  for (const auto& v : r.verdicts) {
    out << v.line() << '\n';
    lines.push_back("verdict " + v.line());
    pass = pass && v.pass;
  }
  for (const auto& w : r.log.warnings) out << "warning: " << w << '\n';
  if (cfg.scenario != Scenario::kde_sinkhorn) {
    const DecayReport d = check_decay_condition(r.log, default_lambda(cfg), cfg.monitor.gamma_gain, decay_options(cfg, r.log));
    std::ostringstream dc;
    write_decay_csv(dc, d);
    art.add(outdir, "decay.csv", dc.str());
  }
  std::ostringstream fw;
  fw << "final_W2 = " << r.final_w2;
  lines.push_back(fw.str());
  write_manifest(outdir, cfg, art, lines);
  out << fw.str() << '\n' << "verdict " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitCertificationFail;
}

int sweep_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out) {
  std::filesystem::create_directories(outdir);
  std::filesystem::remove(outdir / "FAILED");
  const SweepResult res = run_sweep(cfg, outdir);
  std::ostringstream s;
  s << "axis_value,final_W2,final_W2_sd,plateau,seeds\n";
  s.precision(17);
  for (const auto& p : res.points) {
    double var = 0.0;
    for (double v : p.final_w2) var += (v - p.mean_final_w2) * (v - p.mean_final_w2);
    const double sd = p.final_w2.size() > 1 ? std::sqrt(var / static_cast<double>(p.final_w2.size() - 1)) : 0.0;
    s << p.axis_value << ',' << p.mean_final_w2 << ',' << sd << ',' << p.mean_plateau << ',' << p.final_w2.size()
      << '\n';
  }
  s << "# axis=" << res.axis << " spearman=" << res.spearman << '\n';
  if (res.envelope) s << "# " << res.envelope->verdict().line() << '\n';
  require_header(s.str(), "axis_value,final_W2,final_W2_sd,plateau,seeds");
  Artifacts art;
  art.add(outdir, "summary.csv", s.str());
  if (res.envelope) {
    std::ostringstream e;
    write_envelope_csv(e, *res.envelope);
    art.add(outdir, "envelope.csv", e.str());
  }
  std::ostringstream sp;
  sp << "spearman = " << res.spearman;
  write_manifest(outdir, cfg, art, {sp.str()});
  out << "sweep axis=" << res.axis << " spearman=" << res.spearman << '\n';
  bool pass = true;
  if (res.envelope) {
    out << res.envelope->verdict().line() << '\n';
    pass = res.envelope->valid;
  }
  out << "verdict " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitCertificationFail;
}

int sdot_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out) {
  if (cfg.scenario != Scenario::sdot) throw InvalidArgument("sdot: config scenario must be sdot");
  std::filesystem::create_directories(outdir);
  std::filesystem::remove(outdir / "FAILED");
  const GridDensity target = target_density(cfg);
  SdotFlowOptions opts;
  opts.dt = cfg.sdot.dt;
  opts.max_steps = cfg.sdot.max_steps;
  opts.laguerre.mass_tol = cfg.sdot.mass_tol;
  Artifacts art;
  std::vector<std::string> lines;
  if (!cfg.sdot.ns.empty()) {
    const QuantizationReport rep = quantization_sweep(target, cfg.sdot.ns, opts, cfg.seed);
    std::ostringstream q;
    write_quantization_csv(q, rep);
    art.add(outdir, "quantization.csv", q.str());
    std::ostringstream line;
    line << "quantization slope=" << rep.slope << " constant=" << rep.constant << " residual=" << rep.residual;
    out << line.str() << '\n';
    lines.push_back(line.str());
    write_manifest(outdir, cfg, art, lines);
    return kExitPass;
  }
  const SdotRun run = run_sdot_flow(initial_sites(target, cfg.n, derive_seed(cfg.seed, "init")), target, opts);
  TrajectoryLog log;
  log.seed = cfg.seed;
  log.config_hash = cfg.hash();
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const SdotEnergy& e = run.energies[k];
    log.append(run.times[k], std::sqrt(e.energy), e.energy, e.variance, e.variance);
  }
  std::ostringstream traj;
  write_trajectory_csv(traj, log);
  art.add(outdir, "trajectory.csv", traj.str());
  std::ostringstream dg;
  write_diagram_csv(dg, run.final_diagram);
  art.add(outdir, "diagram.csv", dg.str());
  std::ostringstream en;
  en << "t,energy,bias,variance\n";
  en.precision(17);
  for (std::size_t k = 0; k < run.times.size(); ++k)
    en << run.times[k] << ',' << run.energies[k].energy << ',' << run.energies[k].bias << ','
       << run.energies[k].variance << '\n';
  art.add(outdir, "energy.csv", en.str());
  std::ostringstream line;
  line << "sdot final_energy=" << run.energies.back().energy << " stationary=" << (run.stationary ? 1 : 0);
  out << line.str() << '\n';
  lines.push_back(line.str());
  write_manifest(outdir, cfg, art, lines);
  return run.stationary ? kExitPass : kExitNumerical;
}

}  // namespace dissflow
