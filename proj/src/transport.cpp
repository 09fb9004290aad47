#include "dissflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dissflow/sinkhorn.hpp"

namespace dissflow {

namespace {

void require_equal_size(const ParticleEnsemble& a, const ParticleEnsemble& b, const char* who) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << who << ": ensembles have different sizes (" << a.size() << " vs " << b.size()
        << "); resample upstream";
    throw InvalidArgument(msg.str());
  }
  if (a.dim() != b.dim()) throw InvalidArgument(std::string(who) + ": dimension mismatch");
}

std::vector<Eigen::Index> argsort_1d(const Points& p) {
  std::vector<Eigen::Index> idx(p.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) { return p(i, 0) < p(j, 0); });
  return idx;
}

// Exact 1D W2^2 between uniform empirical measures of possibly different
// sizes: integral over q of the squared gap between the step quantile
// functions.
double w2_squared_empirical_1d(const Points& a, const Points& b) {
  std::vector<double> xa(a.rows()), xb(b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) xa[i] = a(i, 0);
  for (Eigen::Index i = 0; i < b.rows(); ++i) xb[i] = b(i, 0);
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const double na = static_cast<double>(xa.size()), nb = static_cast<double>(xb.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < xa.size() && j < xb.size()) {
    const double qa = (i + 1) / na, qb = (j + 1) / nb;
    const double next = std::min(qa, qb);
    const double gap = xa[i] - xb[j];
    total += (next - q) * gap * gap;
    q = next;
    if (qa <= next) ++i;
    if (qb <= next) ++j;
  }
  return total;
}

}  // namespace

OtResult w2_exact_1d(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  require_equal_size(a, b, "w2_exact_1d");
  if (a.dim() != 1) throw InvalidArgument("w2_exact_1d: ensembles must be one-dimensional");
  const auto ia = argsort_1d(a.positions);
  const auto ib = argsort_1d(b.positions);
  OtResult r;
  r.plan.form = TransportPlan::Form::permutation;
  r.plan.permutation.resize(a.size());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    r.plan.permutation[ia[k]] = ib[k];
    const double gap = a.positions(ia[k], 0) - b.positions(ib[k], 0);
    sum += gap * gap;
  }
  r.plan.cost = sum / static_cast<double>(a.size());
  r.distance = std::sqrt(r.plan.cost);
  return r;
}

OtResult w2_assignment(const ParticleEnsemble& a, const ParticleEnsemble& b, Eigen::Index cap) {
  require_equal_size(a, b, "w2_assignment");
  const Eigen::Index n = a.size();
  if (n > cap) {
    std::ostringstream msg;
    msg << "w2_assignment: N = " << n << " exceeds the exact-solver cap " << cap
        << "; use sinkhorn/sinkhorn_divergence for large ensembles";
    throw InvalidArgument(msg.str());
  }
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (a.positions.row(i) - b.positions.row(j)).squaredNorm();
  OtResult r;
  r.plan.form = TransportPlan::Form::permutation;
  r.plan.permutation = solve_assignment(cost);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += cost(i, r.plan.permutation[i]);
  r.plan.cost = sum / static_cast<double>(n);
  r.distance = std::sqrt(r.plan.cost);
  return r;
}

OtResult w2_exact(const ParticleEnsemble& a, const ParticleEnsemble& b, Eigen::Index cap) {
  if (a.dim() == 1) return w2_exact_1d(a, b);
  return w2_assignment(a, b, cap);
}

DistanceEstimate w2_to_target_set(const ParticleEnsemble& rho, const TargetSet& target,
                                  const DistanceOptions& options) {
  auto against_ensemble = [&](const ParticleEnsemble& other) -> DistanceEstimate {
    if (other.dim() != rho.dim()) throw InvalidArgument("w2_to_target_set: dimension mismatch");
    if (rho.dim() == 1)
      return {std::sqrt(w2_squared_empirical_1d(rho.positions, other.positions)), "exact-1d"};
    if (rho.size() == other.size() && rho.size() <= options.assignment_cap)
      return {w2_assignment(rho, other, options.assignment_cap).distance, "assignment"};
    SinkhornOptions so;
    so.epsilon = options.sinkhorn_epsilon;
    const auto div = sinkhorn_divergence(DiscreteMeasure::from_ensemble(rho), DiscreteMeasure::from_ensemble(other), so);
    return {std::sqrt(std::max(0.0, div.divergence)), "sinkhorn-divergence"};
  };

  if (const auto* set = std::get_if<PointSet>(&target))
    return {std::sqrt(second_moment_about_set(rho, *set)), "closed-form-point-set"};
  if (const auto* ens = std::get_if<ParticleEnsemble>(&target)) return against_ensemble(*ens);
  const auto& density = std::get<GridDensity>(target);
  auto est = against_ensemble(sample_density(density, rho.size(), options.resample_seed));
  est.method = "resampled-" + est.method;
  return est;
}

ParticleEnsemble displacement_interpolate(const ParticleEnsemble& a, const ParticleEnsemble& b, double t,
                                          Eigen::Index cap) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("displacement_interpolate: t must lie in [0, 1]");
  const OtResult r = w2_exact(a, b, cap);
  Points pos(a.size(), a.dim());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    pos.row(i) = (1.0 - t) * a.positions.row(i) + t * b.positions.row(r.plan.permutation[i]);
  return ParticleEnsemble(a.domain, std::move(pos));
}

double l2_density_distance(const GridDensity& a, const GridDensity& b) {
  if (!(a.layout == b.layout)) throw InvalidArgument("l2_density_distance: grids differ");
  return std::sqrt((a.values - b.values).squaredNorm() * a.layout.cell_volume());
}

namespace {

struct Quantile1d {
  std::vector<double> cumulative;  // mass up to and including cell k
  std::vector<double> mass;
  double lower = 0.0;
  double width = 0.0;

  explicit Quantile1d(const GridDensity& g) {
    if (g.layout.dim() != 1) throw InvalidArgument("1D quantiles need a one-dimensional grid");
    const auto m = g.cell_masses();
    const double total = m.sum();
    if (!(total > 0.0)) throw InvalidArgument("1D quantiles: density has zero mass");
    mass.resize(m.size());
    cumulative.resize(m.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      mass[k] = m[k] / total;
      acc += mass[k];
      cumulative[k] = acc;
    }
    cumulative.back() = 1.0;
    lower = g.layout.domain().lower(0);
    width = g.layout.spacing(0);
  }

  // Cell carrying level q (first cell whose cumulative mass exceeds q).
  std::size_t cell(double q) const {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), q);
    std::size_t k = std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
    while (mass[k] == 0.0 && k > 0) --k;
    return k;
  }

  // Linear quantile inside cell k.
  double in_cell(std::size_t k, double q) const {
    const double before = cumulative[k] - mass[k];
    const double frac = std::clamp((q - before) / mass[k], 0.0, 1.0);
    return lower + (static_cast<double>(k) + frac) * width;
  }
};

}  // namespace

double grid_quantile_1d(const GridDensity& density, double q) {
  const Quantile1d qf(density);
  q = std::clamp(q, 0.0, 1.0);
  return qf.in_cell(qf.cell(q), q);
}

double w2_grid_1d(const GridDensity& a, const GridDensity& b) {
  const Quantile1d qa(a), qb(b);
  std::vector<double> breaks{0.0, 1.0};
  breaks.insert(breaks.end(), qa.cumulative.begin(), qa.cumulative.end());
  breaks.insert(breaks.end(), qb.cumulative.begin(), qb.cumulative.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double q0 = breaks[k], q1 = breaks[k + 1];
    if (q1 <= q0) continue;
    const double mid = 0.5 * (q0 + q1);
    const std::size_t ca = qa.cell(mid), cb = qb.cell(mid);
    // Both quantile functions are linear on [q0, q1]; integrate the square
    // of their difference exactly.
    const double d0 = qa.in_cell(ca, q0) - qb.in_cell(cb, q0);
    const double d1 = qa.in_cell(ca, q1) - qb.in_cell(cb, q1);
    total += (q1 - q0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
  }
  return std::sqrt(total);
}

void write_permutation_csv(std::ostream& out, const TransportPlan& plan) {
  if (plan.form != TransportPlan::Form::permutation) throw InvalidArgument("write_permutation_csv: plan is not a permutation");
  out << "source,target\n";
  for (std::size_t i = 0; i < plan.permutation.size(); ++i) out << i << ',' << plan.permutation[i] << '\n';
}

void write_coupling_csv(std::ostream& out, const TransportPlan& plan, double threshold) {
  out << std::setprecision(17) << "i,j,mass\n";
  if (plan.form == TransportPlan::Form::permutation) {
    const double m = 1.0 / static_cast<double>(plan.permutation.size());
    for (std::size_t i = 0; i < plan.permutation.size(); ++i) out << i << ',' << plan.permutation[i] << ',' << m << '\n';
    return;
  }
  for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j)
      if (plan.coupling(i, j) > threshold) out << i << ',' << j << ',' << plan.coupling(i, j) << '\n';
}

}  // namespace dissflow
