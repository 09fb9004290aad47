#include "dissflow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <openssl/sha.h>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace dissflow {

Scenario parse_scenario(const std::string& s) {
  if (s == "potential-flow") return Scenario::potential_flow;
  if (s == "entropic-ou") return Scenario::entropic_ou;
  if (s == "regularized-ot") return Scenario::regularized_ot;
  if (s == "kde-sinkhorn") return Scenario::kde_sinkhorn;
  if (s == "sdot") return Scenario::sdot;
  throw InvalidArgument("unknown scenario '" + s +
                        "' (potential-flow, entropic-ou, regularized-ot, kde-sinkhorn, sdot)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::potential_flow:
      return "potential-flow";
    case Scenario::entropic_ou:
      return "entropic-ou";
    case Scenario::regularized_ot:
      return "regularized-ot";
    case Scenario::kde_sinkhorn:
      return "kde-sinkhorn";
    case Scenario::sdot:
      return "sdot";
  }
  return "?";
}

KernelSpec KernelConfig::spec(Eigen::Index n, int dim) const {
  KernelSpec k;
  k.family = family;
  k.dim = dim;
  k.bandwidth = bandwidth ? *bandwidth : bandwidth_rule(n, c, dim);
  k.validate();
  return k;
}

// Parsing ------------------------------------------------------------------------------

namespace {

using boost::property_tree::ptree;

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " = '" + v + "' is not a number");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x)) throw InvalidArgument("config: " + key + " must be an integer");
  return static_cast<long long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string s = boost::algorithm::to_lower_copy(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgument("config: " + key + " must be true or false");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, v, boost::algorithm::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(to_double(key, p));
  }
  return out;
}

std::vector<std::vector<double>> to_points(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, v, boost::algorithm::is_any_of(";"));
  std::vector<std::vector<double>> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(to_list(key, p));
  }
  return out;
}

void apply_defaults(ExperimentConfig& c) {
  c.target = {};
  c.flow = {};
  c.monitor = {};
  c.kernel.reset();
  switch (c.scenario) {
    case Scenario::potential_flow:
      c.lower = -1.0;
      c.upper = 1.0;
      c.n = 1000;
      c.flow.dt = 1e-2;
      c.flow.t_end = 10.0;
      c.flow.log_every = 10;
      break;
    case Scenario::entropic_ou:
      c.lower = -1.0;
      c.upper = 1.0;
      c.n = 10000;
      c.target.grid = 64;
      c.flow.dt = 5e-3;
      c.flow.t_end = 10.0;
      c.flow.log_every = 20;
      c.disturbance = DisturbanceSignal::constant(0.01);
      c.kernel = KernelConfig{KernelFamily::gaussian, 0.5, std::nullopt};
      break;
    case Scenario::regularized_ot:
      c.lower = 0.0;
      c.upper = 1.0;
      c.n = 256;
      c.target.kind = "gaussian";
      c.target.sigma = 0.1;
      c.flow.dt = 0.05;
      c.flow.t_end = 5.0;
      c.flow.log_every = 5;
      c.disturbance = DisturbanceSignal::constant(0.01);
      break;
    case Scenario::kde_sinkhorn:
      c.lower = 0.0;
      c.upper = 1.0;
      c.n = 500;
      c.target.kind = "mixture";
      c.target.centers = {{0.3, 0.3}, {0.7, 0.7}};
      c.target.sigma = 0.1;
      c.target.grid = 40;
      c.flow.dt = 0.1;
      c.flow.t_end = 6.0;
      c.flow.log_every = 5;
      c.disturbance = DisturbanceSignal::constant(0.001);
      c.kernel = KernelConfig{};
      c.kernel->c = 0.15;
      break;
    case Scenario::sdot:
      c.lower = 0.0;
      c.upper = 1.0;
      c.n = 64;
      c.target.kind = "uniform";
      c.target.grid = 256;
      break;
  }
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& v)>;

struct DisturbanceFields {
  std::string kind = "constant";
  double value = 0.0, amplitude = 0.0, period = 1.0, offset = 0.0, phase = 0.0, rate = 0.0;
  std::vector<double> breakpoints, values;
  bool any = false;
};

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.seed", [](auto& c, auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"experiment.output", [](auto& c, auto&, auto& v) { c.output = v; }},
      {"domain.dim", [](auto& c, auto& k, auto& v) { c.dim = static_cast<int>(to_int(k, v)); }},
      {"domain.lower", [](auto& c, auto& k, auto& v) { c.lower = to_double(k, v); }},
      {"domain.upper", [](auto& c, auto& k, auto& v) { c.upper = to_double(k, v); }},
      {"target.kind", [](auto& c, auto&, auto& v) { c.target.kind = v; }},
      {"target.center", [](auto& c, auto& k, auto& v) { c.target.centers = to_points(k, v); }},
      {"target.sigma", [](auto& c, auto& k, auto& v) { c.target.sigma = to_double(k, v); }},
      {"target.grid", [](auto& c, auto& k, auto& v) { c.target.grid = static_cast<int>(to_int(k, v)); }},
      {"particles.n", [](auto& c, auto& k, auto& v) { c.n = to_int(k, v); }},
      {"particles.init", [](auto& c, auto&, auto& v) { c.init = v; }},
      {"particles.init_center", [](auto& c, auto& k, auto& v) { c.init_center = to_list(k, v); }},
      {"particles.init_sigma", [](auto& c, auto& k, auto& v) { c.init_sigma = to_double(k, v); }},
      {"kernel.family",
       [](auto& c, auto&, auto& v) {
         if (!c.kernel) c.kernel = KernelConfig{};
         c.kernel->family = parse_kernel_family(v);
       }},
      {"kernel.c",
       [](auto& c, auto& k, auto& v) {
         if (!c.kernel) c.kernel = KernelConfig{};
         c.kernel->c = to_double(k, v);
       }},
      {"kernel.bandwidth",
       [](auto& c, auto& k, auto& v) {
         if (!c.kernel) c.kernel = KernelConfig{};
         c.kernel->bandwidth = to_double(k, v);
       }},
      {"flow.dt", [](auto& c, auto& k, auto& v) { c.flow.dt = to_double(k, v); }},
      {"flow.t_end", [](auto& c, auto& k, auto& v) { c.flow.t_end = to_double(k, v); }},
      {"flow.integrator",
       [](auto& c, auto&, auto& v) {
         if (v == "euler")
           c.flow.integrator = Integrator::explicit_euler;
         else if (v == "heun")
           c.flow.integrator = Integrator::heun;
         else
           throw InvalidArgument("config: flow.integrator must be euler or heun");
       }},
      {"flow.log_every", [](auto& c, auto& k, auto& v) { c.flow.log_every = static_cast<int>(to_int(k, v)); }},
      {"flow.lipschitz", [](auto& c, auto& k, auto& v) { c.flow.lipschitz = to_double(k, v); }},
      {"potential.modulus", [](auto& c, auto& k, auto& v) { c.modulus = to_double(k, v); }},
      {"potential.zeta", [](auto& c, auto& k, auto& v) { c.zeta = to_list(k, v); }},
      {"kde.measure_epsilon", [](auto& c, auto& k, auto& v) { c.measure_epsilon = to_double(k, v); }},
      {"kde.velocity_tol", [](auto& c, auto& k, auto& v) { c.velocity_tol = to_double(k, v); }},
      {"kde.scale_by_n", [](auto& c, auto& k, auto& v) { c.scale_by_n = to_bool(k, v); }},
      {"sweep.axis",
       [](auto& c, auto&, auto& v) {
         if (!c.sweep) c.sweep = SweepConfig{};
         c.sweep->axis = v;
       }},
      {"sweep.values",
       [](auto& c, auto& k, auto& v) {
         if (!c.sweep) c.sweep = SweepConfig{};
         c.sweep->values = to_list(k, v);
       }},
      {"sweep.seeds",
       [](auto& c, auto& k, auto& v) {
         if (!c.sweep) c.sweep = SweepConfig{};
         c.sweep->seeds = static_cast<int>(to_int(k, v));
       }},
      {"sweep.workers",
       [](auto& c, auto& k, auto& v) {
         if (!c.sweep) c.sweep = SweepConfig{};
         c.sweep->workers = static_cast<int>(to_int(k, v));
       }},
      {"monitor.lambda", [](auto& c, auto& k, auto& v) { c.monitor.lambda = to_double(k, v); }},
      {"monitor.gamma_gain", [](auto& c, auto& k, auto& v) { c.monitor.gamma_gain = to_double(k, v); }},
      {"monitor.threshold", [](auto& c, auto& k, auto& v) { c.monitor.threshold = to_double(k, v); }},
      {"monitor.gamma_template", [](auto& c, auto&, auto& v) { c.monitor.gamma = parse_gamma_template(v); }},
      {"monitor.epsilons", [](auto& c, auto& k, auto& v) { c.monitor.epsilons = to_list(k, v); }},
      {"sdot.dt", [](auto& c, auto& k, auto& v) { c.sdot.dt = to_double(k, v); }},
      {"sdot.max_steps", [](auto& c, auto& k, auto& v) { c.sdot.max_steps = static_cast<int>(to_int(k, v)); }},
      {"sdot.mass_tol", [](auto& c, auto& k, auto& v) { c.sdot.mass_tol = to_double(k, v); }},
      {"sdot.ns",
       [](auto& c, auto& k, auto& v) {
         c.sdot.ns.clear();
         for (double x : to_list(k, v)) c.sdot.ns.push_back(static_cast<Eigen::Index>(std::llround(x)));
       }},
  };
  return table;
}

void apply_disturbance(ExperimentConfig& c, const DisturbanceFields& d) {
  if (!d.any) return;
  if (d.kind == "constant")
    c.disturbance = DisturbanceSignal::constant(d.value);
  else if (d.kind == "sinusoid")
    c.disturbance = DisturbanceSignal::sinusoid(d.amplitude, d.period, d.offset, d.phase);
  else if (d.kind == "piecewise")
    c.disturbance = DisturbanceSignal::piecewise(d.breakpoints, d.values);
  else if (d.kind == "decaying")
    c.disturbance = DisturbanceSignal::decaying(d.value, d.rate);
  else
    throw InvalidArgument("config: disturbance.kind must be constant, sinusoid, piecewise or decaying");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  std::map<std::string, std::string> flat;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw InvalidArgument("config: key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) {
      std::string v = value.data();
      boost::algorithm::trim(v);
      flat[section + "." + key] = v;
    }
  }
  const auto scen = flat.find("experiment.scenario");
  if (scen == flat.end()) throw InvalidArgument("config: experiment.scenario is required");
  c.scenario = parse_scenario(scen->second);
  apply_defaults(c);
  if (flat.count("domain.dim") && c.scenario == Scenario::sdot && !flat.count("target.grid") &&
      flat.at("domain.dim") == "1")
    c.target.grid = 4096;

  DisturbanceFields dist;
  for (const auto& [key, v] : flat) {
    if (key == "experiment.scenario") continue;
    if (key.rfind("disturbance.", 0) == 0) {
      dist.any = true;
      const std::string k = key.substr(12);
      if (k == "kind")
        dist.kind = v;
      else if (k == "value")
        dist.value = to_double(key, v);
      else if (k == "amplitude")
        dist.amplitude = to_double(key, v);
      else if (k == "period")
        dist.period = to_double(key, v);
      else if (k == "offset")
        dist.offset = to_double(key, v);
      else if (k == "phase")
        dist.phase = to_double(key, v);
      else if (k == "rate")
        dist.rate = to_double(key, v);
      else if (k == "breakpoints")
        dist.breakpoints = to_list(key, v);
      else if (k == "values")
        dist.values = to_list(key, v);
      else
        throw InvalidArgument("config: unknown key '" + key + "'");
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw InvalidArgument("config: unknown key '" + key + "'");
    it->second(c, key, v);
  }
  apply_disturbance(c, dist);
  c.echo = flat;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  return parse_config(in);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("config: " + m); };
  if (dim < 1 || dim > 3) fail("domain.dim must be 1, 2 or 3");
  if (!(upper > lower)) fail("domain.upper must exceed domain.lower");
  if (n < 1) fail("particles.n must be positive");
  if (target.grid < 2) fail("target.grid must be at least 2");
  static const std::set<std::string> kinds = {"point", "gaussian", "mixture", "uniform"};
  if (!kinds.count(target.kind)) fail("target.kind must be point, gaussian, mixture or uniform");
  for (const auto& p : target.centers)
    if (static_cast<int>(p.size()) != dim) fail("target.center has the wrong dimension");
  if (target.kind == "mixture" && target.centers.empty()) fail("a mixture target needs target.center");
  if ((target.kind == "gaussian" || target.kind == "mixture") && !(target.sigma > 0.0))
    fail("target.sigma must be positive");
  if (init != "uniform" && init != "gaussian") fail("particles.init must be uniform or gaussian");
  if (!init_center.empty() && static_cast<int>(init_center.size()) != dim) fail("particles.init_center dimension");
  if (!zeta.empty() && static_cast<int>(zeta.size()) != dim) fail("potential.zeta has the wrong dimension");
  if (!(modulus > 0.0)) fail("potential.modulus must be positive");
  flow.validate();

  switch (scenario) {
    case Scenario::potential_flow:
    case Scenario::entropic_ou:
      if (target.kind != "point") fail(to_string(scenario) + " needs a point target");
      if (scenario == Scenario::entropic_ou && !kernel) fail("entropic-ou needs a [kernel] for the Fisher surrogate");
      break;
    case Scenario::regularized_ot:
      if (target.kind == "point") fail("regularized-ot needs a density target");
      if (!(disturbance.sup_norm() > 0.0)) fail("regularized-ot needs a positive regularization u");
      break;
    case Scenario::kde_sinkhorn:
      if (!kernel) fail("kde-sinkhorn requires a [kernel] section");
      if (target.kind == "point") fail("kde-sinkhorn needs a density target");
      if (!(disturbance.sup_norm() > 0.0)) fail("kde-sinkhorn needs a positive regularization u");
      if (!(measure_epsilon > 0.0)) fail("kde.measure_epsilon must be positive");
      if (!(velocity_tol > 0.0)) fail("kde.velocity_tol must be positive");
      break;
    case Scenario::sdot:
      if (target.kind == "point") fail("sdot needs a density target");
      if (!(sdot.dt > 0.0 && sdot.dt <= 1.0)) fail("sdot.dt must lie in (0, 1]");
      if (sdot.max_steps < 1) fail("sdot.max_steps must be positive");
      for (std::size_t k = 1; k < sdot.ns.size(); ++k)
        if (sdot.ns[k] <= sdot.ns[k - 1]) fail("sdot.ns must increase");
      break;
  }
  if (sweep) {
    if (sweep->axis != "u" && sweep->axis != "N" && sweep->axis != "epsilon") fail("sweep.axis must be u, N or epsilon");
    if (sweep->values.empty()) fail("sweep.values is empty");
    if (sweep->seeds < 1) fail("sweep.seeds must be positive");
    if (sweep->workers < 0) fail("sweep.workers must be >= 0");
    if (scenario == Scenario::sdot) fail("use sdot.ns for SD-OT sweeps");
    if (sweep->axis == "epsilon" && scenario != Scenario::kde_sinkhorn)
      fail("the epsilon axis applies to kde-sinkhorn only");
    for (double v : sweep->values) {
      if (sweep->axis == "N" && (v < 1 || v != std::floor(v))) fail("sweep over N needs positive integers");
      if (sweep->axis != "N" && !(v >= 0.0)) fail("sweep values must be nonnegative");
    }
  }
  if (!(monitor.threshold > 0.0 && monitor.threshold <= 1.0)) fail("monitor.threshold must lie in (0, 1]");
  if (monitor.lambda && !(*monitor.lambda >= 0.0)) fail("monitor.lambda must be >= 0");
}

std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  std::ostringstream s;
  for (unsigned char b : digest) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return s.str();
}

std::string ExperimentConfig::hash() const {
  std::ostringstream s;
  s << "scenario = " << to_string(scenario) << '\n';
  for (const auto& [k, v] : echo)
    if (k != "experiment.scenario" && k != "experiment.output") s << k << " = " << v << '\n';
  return git_blob_hash(s.str());
}

std::map<std::string, std::string> ExperimentConfig::effective() const {
  auto num = [](double x) {
    std::ostringstream s;
    s << x;
    return s.str();
  };
  auto list = [&](const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + num(xs[i]);
    return out;
  };
  std::map<std::string, std::string> e;
  e["experiment.scenario"] = to_string(scenario);
  e["experiment.seed"] = std::to_string(seed);
  e["domain.dim"] = std::to_string(dim);
  e["domain.lower"] = num(lower);
  e["domain.upper"] = num(upper);
  e["target.kind"] = target.kind;
  std::string centers;
  for (std::size_t i = 0; i < target.centers.size(); ++i) centers += (i ? ";" : "") + list(target.centers[i]);
  e["target.center"] = centers;
  e["target.sigma"] = num(target.sigma);
  e["target.grid"] = std::to_string(target.grid);
  e["particles.n"] = std::to_string(n);
  e["particles.init"] = init;
  e["particles.init_center"] = list(init_center);
  e["particles.init_sigma"] = num(init_sigma);
  e["disturbance"] = disturbance.describe();
  if (kernel) {
    e["kernel.family"] = to_string(kernel->family);
    e["kernel.c"] = num(kernel->c);
    e["kernel.bandwidth"] = num(kernel->spec(n, dim).bandwidth);
  }
  e["flow.dt"] = num(flow.dt);
  e["flow.t_end"] = num(flow.t_end);
  e["flow.integrator"] = flow.integrator == Integrator::heun ? "heun" : "euler";
  e["flow.log_every"] = std::to_string(flow.log_every);
  if (flow.lipschitz) e["flow.lipschitz"] = num(*flow.lipschitz);
  e["potential.modulus"] = num(modulus);
  e["potential.zeta"] = list(zeta);
  e["kde.measure_epsilon"] = num(measure_epsilon);
  e["kde.velocity_tol"] = num(velocity_tol);
  e["kde.scale_by_n"] = scale_by_n ? "true" : "false";
  if (sweep) {
    e["sweep.axis"] = sweep->axis;
    e["sweep.values"] = list(sweep->values);
    e["sweep.seeds"] = std::to_string(sweep->seeds);
  }
  if (monitor.lambda) e["monitor.lambda"] = num(*monitor.lambda);
  e["monitor.gamma_gain"] = num(monitor.gamma_gain);
  e["monitor.threshold"] = num(monitor.threshold);
  e["monitor.gamma_template"] = to_string(monitor.gamma);
  e["monitor.epsilons"] = list(monitor.epsilons);
  if (scenario == Scenario::sdot) {
    e["sdot.dt"] = num(sdot.dt);
    e["sdot.max_steps"] = std::to_string(sdot.max_steps);
    e["sdot.mass_tol"] = num(sdot.mass_tol);
    std::vector<double> ns(sdot.ns.begin(), sdot.ns.end());
    e["sdot.ns"] = list(ns);
  }
  return e;
}

// Targets -------------------------------------------------------------------------------

GridDensity target_density(const ExperimentConfig& cfg) {
  const GridLayout grid = cfg.grid();
  if (cfg.target.kind == "uniform") return uniform_density(grid);
  std::vector<std::vector<double>> centers = cfg.target.centers;
  if (centers.empty()) {
    std::vector<double> mid(static_cast<std::size_t>(cfg.dim));
    for (int k = 0; k < cfg.dim; ++k) mid[static_cast<std::size_t>(k)] = 0.5 * (cfg.lower + cfg.upper);
    centers.push_back(mid);
  }
  if (cfg.target.kind == "gaussian" || cfg.target.kind == "mixture") {
    Vector acc = Vector::Zero(grid.size());
    for (const auto& c : centers) acc += gaussian_density(grid, c, cfg.target.sigma).values;
    GridDensity g(grid, acc);
    g.normalize();
    return g;
  }
  throw InvalidArgument("target_density: a point target has no density");
}

TargetSet target_set(const ExperimentConfig& cfg) {
  if (cfg.target.kind != "point") return target_density(cfg);
  PointSet set;
  if (cfg.target.centers.empty()) {
    set.points = Points::Zero(1, cfg.dim);
  } else {
    set.points.resize(static_cast<Eigen::Index>(cfg.target.centers.size()), cfg.dim);
    for (std::size_t i = 0; i < cfg.target.centers.size(); ++i)
      for (int k = 0; k < cfg.dim; ++k)
        set.points(static_cast<Eigen::Index>(i), k) = cfg.target.centers[i][static_cast<std::size_t>(k)];
  }
  return set;
}

ParticleEnsemble initial_ensemble(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.init == "uniform") return sample_uniform(cfg.domain(), cfg.n, seed);
  std::vector<double> c = cfg.init_center;
  if (c.empty()) c.assign(static_cast<std::size_t>(cfg.dim), 0.5 * (cfg.lower + cfg.upper));
  const GridLayout grid = GridLayout::uniform(cfg.domain(), std::max(cfg.target.grid, 64));
  return sample_density(gaussian_density(grid, c, cfg.init_sigma), cfg.n, seed);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman: needs two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const auto m = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / m;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / m;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

int guarded(const std::optional<std::filesystem::path>& outdir, std::ostream& err, const std::function<int()>& body) {
  auto mark = [&](const std::string& what) {
    if (!outdir) return;
    std::error_code ec;
    std::filesystem::create_directories(*outdir, ec);
    std::ofstream(*outdir / "FAILED") << what << '\n';
  };
  try {
    return body();
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    mark(e.what());
    return kExitInvalidConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    mark(e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    mark(e.what());
    return kExitNumerical;
  }
}

// check ----------------------------------------------------------------------------------

int check_command(const std::filesystem::path& trajectory, const std::filesystem::path& monitor_config,
                  std::ostream& out) {
  std::ifstream tin(trajectory);
  if (!tin) throw InvalidArgument("check: cannot open " + trajectory.string());
  const TrajectoryLog log = read_trajectory_csv(tin);
  std::ifstream cin(monitor_config);
  if (!cin) throw InvalidArgument("check: cannot open " + monitor_config.string());
  ptree tree;
  try {
    boost::property_tree::read_ini(cin, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("monitor config: ") + e.what());
  }
  static const std::set<std::string> known = {"monitor.lambda",    "monitor.gamma_gain", "monitor.threshold",
                                              "monitor.slack",     "positivity.psi1_a",  "positivity.psi1_p",
                                              "positivity.psi2_a", "positivity.psi2_p",  "invariant.slack",
                                              "noise.particles",   "noise.modulus"};
  std::map<std::string, double> v;
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) {
      const std::string k = section + "." + key;
      if (!known.count(k)) throw InvalidArgument("monitor config: unknown key '" + k + "'");
      std::string s = value.data();
      boost::algorithm::trim(s);
      v[k] = to_double(k, s);
    }
  }
  if (!v.count("monitor.lambda")) throw InvalidArgument("monitor config: monitor.lambda is required");
  auto get = [&](const std::string& k, double def) { return v.count(k) ? v.at(k) : def; };

  DecayOptions dopt;
  dopt.threshold = get("monitor.threshold", 0.99);
  dopt.slack = get("monitor.slack", 1.0);
  if (v.count("noise.particles"))
    dopt.vdot_se = quadratic_diffusion_se(log, get("noise.modulus", 1.0),
                                          static_cast<Eigen::Index>(std::llround(v.at("noise.particles"))));
  const double lambda = v.at("monitor.lambda");
  const double gain = get("monitor.gamma_gain", 0.5);
  bool pass = true;
  const DecayReport decay = check_decay_condition(log, lambda, gain, dopt);
  out << decay.verdict().line() << '\n';
  pass = pass && decay.pass;
  const PowerLaw psi1{get("positivity.psi1_a", 0.5), get("positivity.psi1_p", 2.0)};
  const PowerLaw psi2{get("positivity.psi2_a", 0.5), get("positivity.psi2_p", 2.0)};
  if (v.count("positivity.psi1_a") || v.count("positivity.psi2_a")) {
    const PositivityReport pos = check_positivity_bounds(log, psi1, psi2);
    out << pos.verdict().line() << '\n';
    pass = pass && pos.pass;
    if (lambda > 0.0) {
      const double pert_sup = *std::max_element(log.pert_norm.begin(), log.pert_norm.end());
      const InvariantReport inv =
          check_invariant_level(log, invariant_level(psi2, lambda, gain, pert_sup), get("invariant.slack", 0.05));
      out << inv.verdict().line() << '\n';
      pass = pass && inv.pass;
    }
  }
  out << "verdict " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitPass : kExitCertificationFail;
}

}  // namespace dissflow
