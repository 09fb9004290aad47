#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dissflow/demo.hpp"
#include "dissflow/experiment.hpp"

using namespace dissflow;

namespace {

using Command = int (*)(const ExperimentConfig&, const std::filesystem::path&, std::ostream&);

int run_config(const std::string& path, const std::string& out_override, Command cmd) {
  std::optional<ExperimentConfig> cfg;
  const int rc = guarded(std::nullopt, std::cerr, [&] {
    cfg = load_config(path);
    return static_cast<int>(kExitPass);
  });
  if (rc != kExitPass) return rc;
  const std::filesystem::path outdir = out_override.empty() ? cfg->output : std::filesystem::path(out_override);
  return guarded(outdir, std::cerr, [&] { return cmd(*cfg, outdir, std::cout); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional ISS certification for Wasserstein particle flows"};
  app.require_subcommand(1);

  std::string config, out, trajectory, monitor, demo_dir;

  auto* simulate = app.add_subcommand("simulate", "Run one scenario and certify its trajectory");
  simulate->add_option("config", config, "Experiment config")->required()->check(CLI::ExistingFile);
  simulate->add_option("-o,--out", out, "Output directory (default: experiment.output)");

  auto* sweep = app.add_subcommand("sweep", "Expand a [sweep] section into child runs and summarize");
  sweep->add_option("config", config, "Experiment config")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--out", out, "Output directory (default: experiment.output)");

  auto* check = app.add_subcommand("check", "Certify an existing trajectory CSV");
  check->add_option("trajectory", trajectory, "trajectory.csv")->required()->check(CLI::ExistingFile);
  check->add_option("monitor", monitor, "Monitor config")->required()->check(CLI::ExistingFile);

  auto* demo = app.add_subcommand("demo-figures", "Write the L2 vs W2 and interpolation demo tables");
  demo->add_option("outdir", demo_dir, "Output directory")->required();

  auto* sdot = app.add_subcommand("sdot", "Semi-discrete flow or quantization sweep");
  sdot->add_option("config", config, "Experiment config")->required()->check(CLI::ExistingFile);
  sdot->add_option("-o,--out", out, "Output directory (default: experiment.output)");

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(kExitInvalidConfig);
  }

  if (*version) {
    std::cout << "dissflow " << kVersion << '\n';
    return kExitPass;
  }
  if (*simulate) return run_config(config, out, simulate_command);
  if (*sweep) return run_config(config, out, sweep_command);
  if (*sdot) return run_config(config, out, sdot_command);
  if (*check) return guarded(std::nullopt, std::cerr, [&] { return check_command(trajectory, monitor, std::cout); });
  if (*demo)
    return guarded(std::filesystem::path(demo_dir), std::cerr,
                   [&] { return demo_figures(demo_dir, std::cout) ? kExitPass : kExitCertificationFail; });
  return kExitInvalidConfig;
}
