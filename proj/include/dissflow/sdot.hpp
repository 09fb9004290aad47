#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dissflow/measures.hpp"

namespace dissflow {

/// Equal-mass power diagram of a grid density. In 1D the cells are exact
/// quantile intervals; in higher dimension every grid cell belongs to the
/// site minimizing |x - x_i|^2 - w_i.
struct LaguerreDiagram {
  Points sites;
  Vector weights;
  Vector cell_masses;
  /// Mass-normalized centroids of the cells.
  Points centroids;
  /// int_{W_i} |c_i - x|^2 d rho*.
  Vector within_cell_variance;

  /// 1D: N + 1 interval endpoints in site-rank order; rank[i] is the cell of
  /// site i.
  std::vector<double> boundaries;
  std::vector<Eigen::Index> rank;
  /// d >= 2: owning site of every grid cell.
  std::vector<Eigen::Index> owner;

  int iterations = 0;
  double max_mass_defect = 0.0;

  Eigen::Index size() const { return sites.rows(); }
};

struct LaguerreOptions {
  /// gradient: w += eta (1/N - m), eta halved whenever the dual decreases.
  /// newton: damped Newton on the same dual with a grid-estimated Hessian,
  /// falling back to a gradient step when no damped step is accepted.
  enum class Method { gradient, newton };

  Method method = Method::newton;
  double mass_tol = 1e-4;
  int max_iter = 20000;
  /// Initial ascent step in units of 1 / max density.
  double step = 0.5;
};

/// Solves for weights giving every cell mass 1/N. `warm` (optional) seeds the
/// weights. Throws on coincident sites or when max_iter is exhausted.
LaguerreDiagram solve_laguerre(const Points& sites, const GridDensity& target, const LaguerreOptions& opts = {},
                               const Vector* warm = nullptr);

struct SdotEnergy {
  /// sum_i int_{W_i} |x - x_i|^2 d rho*, evaluated directly.
  double energy = 0.0;
  /// sum_i m_i |x_i - c_i|^2 (= (1/N) sum |x_i - c_i|^2 at equal masses).
  double bias = 0.0;
  /// sum_i within-cell variance.
  double variance = 0.0;
};

/// Throws InvalidArgument when `sites` differ from the diagram's sites.
SdotEnergy sdot_energy(const LaguerreDiagram& diagram, const Points& sites, const GridDensity& target);

/// x_i <- x_i + dt (c_i - x_i), dt in (0, 1].
Points sdot_flow_step(const Points& sites, const LaguerreDiagram& diagram, double dt);

struct SdotFlowOptions {
  double dt = 0.5;
  int max_steps = 400;
  /// Stationary once the relative energy drop per unit time is below this.
  double stationary_tol = 1e-5;
  LaguerreOptions laguerre;
};

struct SdotRun {
  std::vector<double> times;
  std::vector<SdotEnergy> energies;
  Points final_sites;
  LaguerreDiagram final_diagram;
  bool stationary = false;
};

SdotRun run_sdot_flow(const Points& sites0, const GridDensity& target, const SdotFlowOptions& opts = {});

/// Initial sites: n i.i.d. samples of the target, seeded.
Points initial_sites(const GridDensity& target, Eigen::Index n, std::uint64_t seed);

struct QuantizationReport {
  std::vector<Eigen::Index> ns;
  std::vector<double> energies;
  std::vector<bool> converged;
  /// Points used in the fit: the trailing run of strictly decreasing
  /// energies among converged runs.
  std::vector<bool> in_window;
  double slope = 0.0;
  double intercept = 0.0;
  /// exp(intercept): energy ~ constant * N^slope.
  double constant = 0.0;
  /// RMS residual of the log-log fit.
  double residual = 0.0;
};

QuantizationReport quantization_sweep(const GridDensity& target, const std::vector<Eigen::Index>& ns,
                                      const SdotFlowOptions& opts, std::uint64_t seed);

void write_diagram_csv(std::ostream& out, const LaguerreDiagram& diagram);
void write_quantization_csv(std::ostream& out, const QuantizationReport& report);

}  // namespace dissflow
