#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dissflow/flows.hpp"
#include "dissflow/kde.hpp"
#include "dissflow/monitor.hpp"
#include "dissflow/sdot.hpp"

namespace dissflow {

inline constexpr const char* kVersion = "0.1.0";

/// Exit statuses of the runner.
enum ExitCode : int { kExitPass = 0, kExitInvalidConfig = 1, kExitNumerical = 2, kExitCertificationFail = 3 };

enum class Scenario { potential_flow, entropic_ou, regularized_ot, kde_sinkhorn, sdot };
Scenario parse_scenario(const std::string& s);
std::string to_string(Scenario s);

/// Target specification: a point (set), or a density on a grid.
struct TargetConfig {
  /// point | gaussian | mixture | uniform
  std::string kind = "point";
  /// Point location or Gaussian mean; mixtures list "x,y;x,y".
  std::vector<std::vector<double>> centers;
  double sigma = 0.1;
  /// Cells per axis of the grid carrying densities (targets, KDEs, Fisher
  /// surrogates, SD-OT cells).
  int grid = 40;
};

struct KernelConfig {
  KernelFamily family = KernelFamily::gaussian;
  /// h = c N^(-1/(d+2)) unless a fixed bandwidth is given.
  double c = 0.25;
  std::optional<double> bandwidth;

  KernelSpec spec(Eigen::Index n, int dim) const;
};

struct SweepConfig {
  /// u | N | epsilon
  std::string axis;
  std::vector<double> values;
  int seeds = 1;
  /// Concurrent child runs; 0 = hardware concurrency.
  int workers = 0;
};

struct MonitorConfig {
  /// Decay-rate constant of the decay inequality; scenario default if unset.
  std::optional<double> lambda;
  double gamma_gain = 0.5;
  double threshold = 0.99;
  GammaTemplate gamma = GammaTemplate::power;
  std::vector<double> epsilons = {0.05, 0.1};
};

struct SdotConfig {
  double dt = 0.5;
  int max_steps = 400;
  double mass_tol = 1e-4;
  /// Quantization sweep over these N when non-empty.
  std::vector<Eigen::Index> ns;
};

/// One experiment; every field has a scenario-dependent default.
struct ExperimentConfig {
  Scenario scenario = Scenario::potential_flow;
  std::uint64_t seed = 1;
  std::filesystem::path output = "out";

  int dim = 2;
  double lower = -1.0;
  double upper = 1.0;
  TargetConfig target;

  Eigen::Index n = 1000;
  /// uniform | gaussian
  std::string init = "uniform";
  std::vector<double> init_center;
  double init_sigma = 0.2;

  DisturbanceSignal disturbance = DisturbanceSignal::constant(0.0);
  std::optional<KernelConfig> kernel;
  FlowConfig flow;

  /// potential-flow: modulus of the quadratic potential and the constant
  /// disturbance direction zeta.
  double modulus = 1.0;
  std::vector<double> zeta;
  /// kde-sinkhorn: regularization used to measure the final W2.
  double measure_epsilon = 1e-3;
  /// kde-sinkhorn: marginal tolerance of the per-step velocity solve.
  double velocity_tol = 1e-4;
  /// kde-sinkhorn: multiply the agent control input by 1/N.
  bool scale_by_n = false;

  std::optional<SweepConfig> sweep;
  MonitorConfig monitor;
  SdotConfig sdot;

  /// Normalized "section.key = value" pairs as read (for the manifest).
  std::map<std::string, std::string> echo;

  BoxDomain domain() const { return BoxDomain::cube(dim, lower, upper); }
  GridLayout grid() const { return GridLayout::uniform(domain(), target.grid); }
  /// Throws InvalidArgument on inconsistent fields.
  void validate() const;
  /// Every resolved field, defaults included, as "section.key" -> value.
  std::map<std::string, std::string> effective() const;
  /// Hash of the normalized key-value echo.
  std::string hash() const;
};

/// INI-style text with [sections]; unknown sections or keys are rejected.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Hex SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_hash(const std::string& content);

/// Target as a grid density (kind gaussian / mixture / uniform) on the
/// config grid.
GridDensity target_density(const ExperimentConfig& cfg);
TargetSet target_set(const ExperimentConfig& cfg);
ParticleEnsemble initial_ensemble(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunResult {
  TrajectoryLog log;
  ParticleEnsemble final_state;
  double final_w2 = 0.0;
  /// Per-particle squared distances to the target point set at logged times
  /// (point targets only).
  std::optional<DistanceSamples> samples;
  std::vector<Verdict> verdicts;
};

/// Runs one flow scenario (not sdot) with the given seed; pure computation.
RunResult run_scenario(const ExperimentConfig& cfg, std::uint64_t seed, bool keep_samples = false);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SweepPoint {
  double axis_value = 0.0;
  std::vector<double> final_w2;
  std::vector<double> plateau;
  double mean_final_w2 = 0.0;
  double mean_plateau = 0.0;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;
  double spearman = 0.0;
  std::optional<DissEnvelope> envelope;
};

/// Expands the sweep into child runs (axis value x seed) on a worker pool.
/// With `outdir` set each child writes its artifacts under
/// outdir/<axis>_<value>/seed_<k>.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& outdir = {});

// Subcommands: each returns an ExitCode and reports on `out`.
int simulate_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out);
int sweep_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out);
int sdot_command(const ExperimentConfig& cfg, const std::filesystem::path& outdir, std::ostream& out);
int check_command(const std::filesystem::path& trajectory, const std::filesystem::path& monitor_config,
                  std::ostream& out);

/// Maps InvalidArgument to 1 and NumericalError to 2, writing a FAILED marker
/// into `outdir` (when given) so partial outputs are recognizable.
int guarded(const std::optional<std::filesystem::path>& outdir, std::ostream& err, const std::function<int()>& body);

}  // namespace dissflow
