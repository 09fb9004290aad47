#pragma once

#include <functional>
#include <iosfwd>

#include "dissflow/functionals.hpp"
#include "dissflow/measures.hpp"

namespace dissflow {

enum class KernelFamily { gaussian, epanechnikov };

KernelFamily parse_kernel_family(const std::string& name);
std::string to_string(KernelFamily family);

/// Isotropic kernel K_h(z) = h^-d K(z / h). The moments are the scale-free
/// coefficients: int K_h |z| = h mu1, int K_h |z|^2 = h^2 mu2.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth = 0.1;
  int dim = 1;

  /// Throws unless bandwidth > 0 and dim >= 1.
  void validate() const;
  double mu1() const;
  double mu2() const;
  /// K_h at squared distance r2 (untruncated, integrates to one on R^d).
  double operator()(double r2) const;
  /// Radius beyond which the kernel is treated as zero (7h for the Gaussian,
  /// h for Epanechnikov).
  double cutoff() const;
};

/// h = c N^(-1 / (d + 2)).
double bandwidth_rule(Eigen::Index n, double c, int d);

/// Per-particle kernel weights on a grid: every particle's kernel is
/// truncated to the box and renormalized so it carries mass exactly 1/N
/// under midpoint quadrature.
class KernelGridWeights {
 public:
  KernelGridWeights(const Points& sites, const KernelSpec& kernel, const GridLayout& grid);

  /// Calls fn(cell, weight) for the cells in particle i's support; weights
  /// sum to one (cell masses, not densities).
  void for_each(Eigen::Index i, const std::function<void(Eigen::Index, double)>& fn) const;
  /// Quadrature mass of the untruncated kernel of particle i over the box;
  /// K_h / norm(i) is its renormalized kernel.
  double norm(Eigen::Index i) const { return norms_[i]; }
  const GridLayout& grid() const { return grid_; }

 private:
  const Points& sites_;
  KernelSpec kernel_;
  GridLayout grid_;
  Vector norms_;
};

/// rho^{h,N}(x) = (1/N) sum_i K_h(x - x_i) on a grid, boundary mass folded
/// back per particle.
GridDensity kde_evaluate(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& grid);

/// Kernel regression of the convolved ideal field:
///   field(x) = sum_j g_j K_j(x) / sum_j K_j(x),  g_j = (grad phi * K_h)(x_j)
/// with K_j the box-renormalized kernel of agent j. Where the KDE density
/// drops below `floor` the nearest agent's g_j is returned.
struct NadarayaField {
  KernelSpec kernel;
  Points sites;
  /// Per-agent convolved gradients g_i.
  Points agent_gradients;
  /// Renormalization of each agent's kernel over the box.
  Vector norms;
  double floor = 1e-12;

  /// Field values at query points.
  Points at(const Points& query) const;
  /// KDE density at query points (consistent with kde_evaluate).
  Vector density(const Points& query) const;
  VelocityField as_velocity_field() const;
};

/// Ideal field given per quadrature cell (rows follow the flat cell index).
/// Throws if the grid spacing exceeds h/2.
NadarayaField nadaraya_velocity(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& quadrature,
                                const Points& ideal_on_cells, double floor = 1e-12);

/// Ideal field given as a function of points; it is sampled at the cell
/// centers of `quadrature`.
NadarayaField nadaraya_velocity(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& quadrature,
                                const std::function<Points(const Points&)>& ideal, double floor = 1e-12);

/// 2 L^2 (mu2 + mu1^2) h^2.
double kde_perturbation_bound(double lipschitz, const KernelSpec& kernel);

/// int |field(x) - ideal(x)|^2 rho^{h,N}(x) dx by midpoint quadrature on the
/// given grid.
double nadaraya_error_l2(const NadarayaField& field, const GridLayout& grid,
                         const std::function<Points(const Points&)>& ideal);

/// (1/N) sum_i |field(x_i) - ideal(x_i)|^2.
double nadaraya_error_at_agents(const NadarayaField& field, const std::function<Points(const Points&)>& ideal);

/// Per-agent g_i as CSV (agent, g0, g1, ...).
void write_agent_gradients(std::ostream& out, const NadarayaField& field);

}  // namespace dissflow
