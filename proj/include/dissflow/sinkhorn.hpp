#pragma once

#include <iosfwd>
#include <optional>

#include "dissflow/measures.hpp"
#include "dissflow/transport.hpp"

namespace dissflow {

/// Weighted point cloud; grid measures additionally keep their layout so the
/// solver can apply the Gaussian kernel separably.
struct DiscreteMeasure {
  Points support;
  Vector weights;
  std::optional<GridLayout> grid;

  static DiscreteMeasure from_ensemble(const ParticleEnsemble& ensemble);
  static DiscreteMeasure from_grid(const GridDensity& density);

  Eigen::Index size() const { return support.rows(); }
  int dim() const { return static_cast<int>(support.cols()); }
};

struct SinkhornOptions {
  double epsilon = 1e-2;
  /// Stop when the L1 violation of both marginals is below tol.
  double tol = 1e-6;
  int max_iter = 20000;
  /// epsilon-scaling starts at scaling_start * epsilon and halves down to
  /// epsilon. 1 disables scaling.
  double scaling_start = 10.0;
  /// Stabilized kernel entries below exp(-truncation) are dropped
  /// (point-cloud solver only).
  double truncation = 40.0;
  /// Log-domain stabilization. The plain scaling variant underflows for small
  /// epsilon and reports it.
  bool log_domain = true;
  /// Over-relaxation exponent omega in [1, 2): each scaling update becomes
  /// u <- u^(1 - omega) (1 / K v)^omega. 1 is plain Sinkhorn; 0 picks omega
  /// per epsilon stage from the observed convergence rate.
  double relaxation = 0.0;
};

/// Dual potentials of the entropic problem
///   min <c, pi> + eps KL(pi | a (x) b),  c = |x - y|^2,
/// with pi_ij = a_i b_j exp((f_i + g_j - c_ij) / eps).
struct EntropicPotentials {
  Vector f;
  Vector g;
  double epsilon = 0.0;
  int iterations = 0;
  double marginal_error = 0.0;
  bool converged = false;
  /// <c, pi>.
  double primal_cost = 0.0;
  /// <c, pi> + eps KL(pi | a (x) b).
  double regularized_cost = 0.0;
};

/// Entropic OT between two discrete measures. Grid-to-grid problems on the
/// same dimension use separable log-domain Gaussian convolutions; other
/// pairs use an absorbed, truncated kernel. On hitting max_iter the result
/// is returned with converged = false.
EntropicPotentials sinkhorn(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornOptions& options,
                            const EntropicPotentials* warm_start = nullptr);

/// Throws NumericalError unless the solve converged.
void require_converged(const EntropicPotentials& potentials, const char* context);

struct SinkhornDivergence {
  /// OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2.
  double divergence = 0.0;
  EntropicPotentials ab;
  EntropicPotentials aa;
  EntropicPotentials bb;
};

/// Debiased Sinkhorn divergence; an estimate of W2^2 with the entropic bias
/// removed.
SinkhornDivergence sinkhorn_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       const SinkhornOptions& options);

/// Row sums of the plan implied by `potentials` evaluated at source points x
/// (with source weights a). Used to detect potentials that no longer match
/// the source.
Vector plan_row_sums(const Points& x, const Vector& source_weights, const EntropicPotentials& potentials,
                     const DiscreteMeasure& target);

/// Barycentric projection T(x_i) = E_pi[y | x_i].
Points barycentric_projection(const Points& x, const EntropicPotentials& potentials,
                              const DiscreteMeasure& target);

/// v(x_i) = T(x_i) - x_i with uniform source weights 1/N. Throws if the
/// implied row sums violate the source marginal by more than stale_tol (L1),
/// which means the particles moved since the potentials were computed.
Points sinkhorn_velocity(const Points& x, const EntropicPotentials& potentials, const DiscreteMeasure& target,
                         double stale_tol = 1e-3);

/// Grid-to-grid barycentric projection evaluated at the source cell
/// centers, computed with separable convolutions.
Points grid_barycentric_projection(const DiscreteMeasure& source, const EntropicPotentials& potentials,
                                   const DiscreteMeasure& target);

/// Dense coupling matrix (small problems only).
TransportPlan dense_plan(const DiscreteMeasure& a, const DiscreteMeasure& b, const EntropicPotentials& potentials);

/// Header (epsilon, iterations, marginalError) then one row per index with
/// the f and g values.
void write_potentials(std::ostream& out, const EntropicPotentials& potentials);

}  // namespace dissflow
