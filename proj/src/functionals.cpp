#include "dissflow/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dissflow/rng.hpp"
#include "dissflow/sinkhorn.hpp"

namespace dissflow {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double row_value(const ScalarField& v, const Points& x, Eigen::Index i) {
  return v(std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())));
}

double mean_potential(const PotentialEnergy& p, const Points& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += row_value(p.value, x, i);
  return s / static_cast<double>(x.rows());
}

Points potential_velocities(const PotentialEnergy& p, const Points& x) {
  Points v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    p.gradient(std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())),
               std::span<double>(v.row(i).data(), static_cast<std::size_t>(x.cols())));
  }
  return -v;
}

double entropy_floor(const Entropy& e, const GridLayout& layout) {
  return e.floor_factor / layout.domain().volume();
}

GridDensity entropy_surrogate(const Entropy& e, const ParticleEnsemble& rho) {
  if (!e.surrogate)
    throw InvalidArgument("entropy: a density surrogate (KDE or grid density) is required; the entropy of an "
                          "empirical measure is -infinity");
  return e.surrogate(rho);
}

Points nearest_point_velocities(const ParticleEnsemble& rho, const PointSet& set) {
  if (set.points.rows() == 0) throw InvalidArgument("otToTarget: empty point set");
  Points v(rho.size(), rho.dim());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < set.points.rows(); ++k) {
      const double d = (rho.positions.row(i) - set.points.row(k)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    v.row(i) = set.points.row(best) - rho.positions.row(i);
  }
  return v;
}

Points assignment_velocities(const ParticleEnsemble& rho, const ParticleEnsemble& target, Eigen::Index cap) {
  if (rho.size() != target.size())
    throw InvalidArgument("otToTarget: the exact (epsilon = 0) gradient needs a target with the same N; use "
                          "epsilon > 0");
  const OtResult r = w2_exact(rho, target, cap);
  Points v(rho.size(), rho.dim());
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    v.row(i) = target.positions.row(r.plan.permutation[i]) - rho.positions.row(i);
  return v;
}

Points entropic_velocities(const ParticleEnsemble& rho, const DiscreteMeasure& target, double epsilon) {
  SinkhornOptions o;
  o.epsilon = epsilon;
  const DiscreteMeasure source = DiscreteMeasure::from_ensemble(rho);
  const EntropicPotentials p = sinkhorn(source, target, o);
  require_converged(p, "otToTarget gradient");
  return barycentric_projection(rho.positions, p, target) - rho.positions;
}

Points ot_velocities(const OtToTarget& ot, const ParticleEnsemble& rho) {
  return std::visit(
      Overloaded{
          [&](const PointSet& set) { return nearest_point_velocities(rho, set); },
          [&](const ParticleEnsemble& target) {
            if (ot.epsilon > 0.0) return entropic_velocities(rho, DiscreteMeasure::from_ensemble(target), ot.epsilon);
            return assignment_velocities(rho, target, ot.distance.assignment_cap);
          },
          [&](const GridDensity& target) {
            if (ot.epsilon > 0.0) return entropic_velocities(rho, DiscreteMeasure::from_grid(target), ot.epsilon);
            return assignment_velocities(rho, sample_density(target, rho.size(), ot.distance.resample_seed),
                                         ot.distance.assignment_cap);
          },
      },
      ot.target);
}

}  // namespace

PotentialEnergy quadratic_potential(std::vector<double> center, double modulus) {
  if (center.empty()) throw InvalidArgument("quadratic_potential: center must have dimension >= 1");
  if (!(modulus > 0.0)) throw InvalidArgument("quadratic_potential: modulus must be positive");
  PotentialEnergy p;
  p.value = [center, modulus](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t k = 0; k < center.size(); ++k) s += (x[k] - center[k]) * (x[k] - center[k]);
    return 0.5 * modulus * s;
  };
  p.gradient = [center, modulus](std::span<const double> x, std::span<double> g) {
    for (std::size_t k = 0; k < center.size(); ++k) g[k] = modulus * (x[k] - center[k]);
  };
  p.lipschitz = modulus;
  p.name = "quadratic";
  return p;
}

double eval_functional(const FunctionalSpec& f, const ParticleEnsemble& rho) {
  if (rho.size() == 0) throw InvalidArgument("eval_functional: empty ensemble");
  return std::visit(Overloaded{
                        [&](const PotentialEnergy& p) { return mean_potential(p, rho.positions); },
                        [&](const Entropy& e) {
                          const GridDensity s = entropy_surrogate(e, rho);
                          const double floor = entropy_floor(e, s.layout);
                          double h = 0.0;
                          for (Eigen::Index c = 0; c < s.values.size(); ++c) {
                            const double r = s.values[c];
                            if (r > 0.0) h += r * std::log(std::max(r, floor));
                          }
                          return h * s.layout.cell_volume();
                        },
                        [&](const OtToTarget& ot) {
                          const double w = w2_to_target_set(rho, ot.target, ot.distance).value;
                          return 0.5 * w * w;
                        },
                    },
                    f.kind);
}

VelocityField gradient_field(const FunctionalSpec& f) {
  VelocityField field;
  std::visit(Overloaded{
                 [&](const PotentialEnergy& p) {
                   field.provenance = "potential:" + p.name;
                   field.evaluate = [p](const ParticleEnsemble& rho, double) {
                     return potential_velocities(p, rho.positions);
                   };
                 },
                 [&](const Entropy& e) {
                   field.provenance = "entropy";
                   field.evaluate = [e](const ParticleEnsemble& rho, double) {
                     const GridDensity s = entropy_surrogate(e, rho);
                     const Points g = log_density_gradient(s, entropy_floor(e, s.layout));
                     return Points(-interpolate_cells(s.layout, g, rho.positions));
                   };
                 },
                 [&](const OtToTarget& ot) {
                   field.provenance = ot.epsilon > 0.0 ? "ot-entropic" : "ot-exact";
                   field.evaluate = [ot](const ParticleEnsemble& rho, double) { return ot_velocities(ot, rho); };
                 },
             },
             f.kind);
  return field;
}

Points gradient_velocities(const FunctionalSpec& f, const ParticleEnsemble& rho) { return gradient_field(f)(rho, 0.0); }

ParticleEnsemble target_ensemble(const TargetSet& target, const BoxDomain& domain, Eigen::Index n,
                                 std::uint64_t seed) {
  return std::visit(Overloaded{
                        [&](const PointSet& set) {
                          if (set.points.rows() == 0) throw InvalidArgument("target_ensemble: empty point set");
                          Points p(n, set.points.cols());
                          for (Eigen::Index i = 0; i < n; ++i) p.row(i) = set.points.row(i % set.points.rows());
                          return ParticleEnsemble(domain, std::move(p));
                        },
                        [&](const ParticleEnsemble& e) { return e; },
                        [&](const GridDensity& g) { return sample_density(g, n, seed); },
                    },
                    target);
}

// Checkers --------------------------------------------------------------------

namespace {

void finish_min(CheckerReport& r, const std::optional<double>& claimed, double tol) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& row : r.rows) {
    if (row.skipped) continue;
    m = std::min(m, row.ratio);
    if (claimed && row.ratio < *claimed * (1.0 - tol)) r.violations.push_back(row.sample);
  }
  r.modulus = std::isfinite(m) ? m : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

CheckerReport check_quadratic_growth(const FunctionalSpec& f, const std::vector<ParticleEnsemble>& samples,
                                     const TargetSet& target, const CheckerOptions& options) {
  CheckerReport r;
  r.name = "quadratic_growth";
  const DistanceOptions dist = std::holds_alternative<OtToTarget>(f.kind) ? std::get<OtToTarget>(f.kind).distance
                                                                           : DistanceOptions{};
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& rho = samples[s];
    const double fstar = eval_functional(f, target_ensemble(target, rho.domain, rho.size(), dist.resample_seed));
    const double w = w2_to_target_set(rho, target, dist).value;
    CheckerRow row;
    row.sample = s;
    row.lhs = w * w;
    row.rhs = 2.0 * (eval_functional(f, rho) - fstar);
    if (row.lhs < options.degenerate) {
      row.skipped = true;
      ++r.skipped;
    } else {
      row.ratio = row.rhs / row.lhs;
    }
    r.rows.push_back(row);
  }
  finish_min(r, f.lambda, options.tol);
  return r;
}

CheckerReport check_gradient_dominance(const FunctionalSpec& f, const std::vector<ParticleEnsemble>& samples,
                                       const TargetSet& target, const CheckerOptions& options) {
  CheckerReport r;
  r.name = "gradient_dominance";
  const VelocityField field = gradient_field(f);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& rho = samples[s];
    const double fstar = eval_functional(f, target_ensemble(target, rho.domain, rho.size()));
    const Points v = field(rho, 0.0);
    CheckerRow row;
    row.sample = s;
    row.lhs = v.squaredNorm() / static_cast<double>(rho.size());
    row.rhs = 2.0 * (eval_functional(f, rho) - fstar);
    if (row.rhs < options.degenerate) {
      row.skipped = true;
      ++r.skipped;
    } else {
      row.ratio = row.lhs / row.rhs;
    }
    r.rows.push_back(row);
  }
  finish_min(r, f.lambda, options.tol);
  return r;
}

CheckerReport check_l_smoothness(const FunctionalSpec& f,
                                 const std::vector<std::pair<ParticleEnsemble, ParticleEnsemble>>& pairs,
                                 const CheckerOptions& options) {
  CheckerReport r;
  r.name = "l_smoothness";
  const VelocityField field = gradient_field(f);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    const auto& [rho0, rho1] = pairs[s];
    const OtResult plan = w2_exact(rho0, rho1);
    const Points v = field(rho0, 0.0);
    double directional = 0.0;
    for (Eigen::Index i = 0; i < rho0.size(); ++i)
      directional -= v.row(i).dot(rho1.positions.row(plan.plan.permutation[i]) - rho0.positions.row(i));
    directional /= static_cast<double>(rho0.size());
    CheckerRow row;
    row.sample = s;
    row.lhs = std::abs(eval_functional(f, rho1) - eval_functional(f, rho0) - directional);
    row.rhs = 0.5 * plan.plan.cost;
    if (row.rhs < options.degenerate) {
      row.skipped = true;
      ++r.skipped;
    } else {
      row.ratio = row.lhs / row.rhs;
      mx = std::max(mx, row.ratio);
      if (f.l_smooth && row.ratio > *f.l_smooth * (1.0 + options.tol)) r.violations.push_back(s);
    }
    r.rows.push_back(row);
  }
  r.modulus = std::isfinite(mx) ? mx : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double spot_check_gradient_lipschitz(const PotentialEnergy& v, const BoxDomain& domain, int pairs,
                                     std::uint64_t seed) {
  const ParticleEnsemble a = sample_uniform(domain, pairs, derive_seed(seed, "lipschitz-a"));
  const ParticleEnsemble b = sample_uniform(domain, pairs, derive_seed(seed, "lipschitz-b"));
  const Points ga = -potential_velocities(v, a.positions);
  const Points gb = -potential_velocities(v, b.positions);
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const double dx = (a.positions.row(i) - b.positions.row(i)).norm();
    if (dx > 0.0) worst = std::max(worst, (ga.row(i) - gb.row(i)).norm() / dx);
  }
  return worst;
}

void write_checker_report(std::ostream& out, const CheckerReport& report) {
  out << std::setprecision(17) << "sample,lhs,rhs,ratio\n";
  for (const auto& row : report.rows) {
    out << row.sample << ',' << row.lhs << ',' << row.rhs << ',';
    if (row.skipped) {
      out << "skipped";
    } else {
      out << row.ratio;
    }
    out << '\n';
  }
  out << "# " << report.name << " modulus=" << report.modulus << " violations=" << report.violations.size()
      << " skipped=" << report.skipped << '\n';
}

// Fisher information -------------------------------------------------------------

double default_density_floor(const GridLayout& layout) { return 1e-12 / layout.domain().volume(); }

namespace {

// Central difference of per-cell data along one axis (one-sided at faces).
template <class Get>
double axis_difference(const GridLayout& layout, std::vector<int>& multi, int axis, Get&& get) {
  const int n = layout.cells(axis);
  if (n < 2) return 0.0;
  const int i = multi[axis];
  const int lo = std::max(0, i - 1), hi = std::min(n - 1, i + 1);
  multi[axis] = hi;
  const double vh = get(layout.ravel(multi));
  multi[axis] = lo;
  const double vl = get(layout.ravel(multi));
  multi[axis] = i;
  return (vh - vl) / ((hi - lo) * layout.spacing(axis));
}

}  // namespace

double fisher_information(const GridDensity& rho, std::optional<double> floor) {
  const GridLayout& layout = rho.layout;
  const double fl = floor.value_or(default_density_floor(layout));
  std::vector<int> multi(layout.dim());
  for (Eigen::Index c = 0; c < layout.size(); ++c) {
    if (!(rho.values[c] >= fl)) {
      layout.unravel(c, multi);
      std::ostringstream msg;
      msg << "fisher_information: density " << rho.values[c] << " below floor " << fl << " at cell (";
      for (int k = 0; k < layout.dim(); ++k) msg << (k ? "," : "") << multi[k];
      msg << ")";
      throw NumericalError(msg.str());
    }
  }
  double total = 0.0;
  auto get = [&](Eigen::Index c) { return rho.values[c]; };
  for (Eigen::Index c = 0; c < layout.size(); ++c) {
    layout.unravel(c, multi);
    double g2 = 0.0;
    for (int k = 0; k < layout.dim(); ++k) {
      const double g = axis_difference(layout, multi, k, get);
      g2 += g * g;
    }
    total += g2 / rho.values[c];
  }
  return total * layout.cell_volume();
}

Points log_density_gradient(const GridDensity& rho, double floor) {
  const GridLayout& layout = rho.layout;
  Vector logs(layout.size());
  for (Eigen::Index c = 0; c < layout.size(); ++c) logs[c] = std::log(std::max(rho.values[c], floor));
  Points g(layout.size(), layout.dim());
  std::vector<int> multi(layout.dim());
  auto get = [&](Eigen::Index c) { return logs[c]; };
  for (Eigen::Index c = 0; c < layout.size(); ++c) {
    layout.unravel(c, multi);
    for (int k = 0; k < layout.dim(); ++k) g(c, k) = axis_difference(layout, multi, k, get);
  }
  return g;
}

Points interpolate_cells(const GridLayout& layout, const Points& cell_values, const Points& x) {
  const int d = layout.dim();
  if (x.cols() != d) throw InvalidArgument("interpolate_cells: dimension mismatch");
  if (cell_values.rows() != layout.size()) throw InvalidArgument("interpolate_cells: one row per cell expected");
  Points out = Points::Zero(x.rows(), cell_values.cols());
  std::vector<int> base(d), multi(d);
  std::vector<double> frac(d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < d; ++k) {
      const int n = layout.cells(k);
      const double t = (x(i, k) - layout.domain().lower(k)) / layout.spacing(k) - 0.5;
      if (n == 1) {
        base[k] = 0;
        frac[k] = 0.0;
        continue;
      }
      const int i0 = std::clamp(static_cast<int>(std::floor(t)), 0, n - 2);
      base[k] = i0;
      frac[k] = std::clamp(t - i0, 0.0, 1.0);
    }
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = 1.0;
      for (int k = 0; k < d; ++k) {
        const bool up = (corner >> k) & 1;
        if (up && layout.cells(k) == 1) {
          w = 0.0;
          break;
        }
        multi[k] = base[k] + (up ? 1 : 0);
        w *= up ? frac[k] : 1.0 - frac[k];
      }
      if (w == 0.0) continue;
      out.row(i) += w * cell_values.row(layout.ravel(multi));
    }
  }
  return out;
}

// Proper losses ---------------------------------------------------------------------

FunctionalSpec lift_proper_loss(const ProperLoss& loss, std::optional<double> lambda,
                                std::optional<double> l_smooth) {
  if (!loss.value || !loss.gradient) throw InvalidArgument("lift_proper_loss: value and gradient are required");
  if (loss.minimizers.points.rows() == 0) throw InvalidArgument("lift_proper_loss: empty minimizer set");
  PotentialEnergy p;
  p.value = loss.value;
  p.gradient = loss.gradient;
  p.name = "proper-loss";
  if (l_smooth) p.lipschitz = *l_smooth;
  FunctionalSpec f;
  f.kind = std::move(p);
  f.lambda = lambda;
  f.l_smooth = l_smooth;
  return f;
}

ProperLossReport check_proper_loss(const ProperLoss& loss, const Points& samples, double fd_step) {
  ProperLossReport r;
  r.growth = std::numeric_limits<double>::infinity();
  r.gradient_size = std::numeric_limits<double>::infinity();
  const Eigen::Index d = samples.cols();
  for (Eigen::Index m = 0; m < loss.minimizers.points.rows(); ++m)
    if (std::abs(row_value(loss.value, loss.minimizers.points, m) - loss.minimum) > 1e-12) r.minimum_holds = false;
  Eigen::RowVectorXd g(d), gp(d), xp(d);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const std::span<const double> x(samples.row(i).data(), static_cast<std::size_t>(d));
    const double gap = loss.value(x) - loss.minimum;
    if (gap < -1e-12) r.minimum_holds = false;
    const double d2 = std::pow(dist_to_set(x, loss.minimizers), 2);
    loss.gradient(x, std::span<double>(g.data(), static_cast<std::size_t>(d)));
    if (d2 > 1e-14) r.growth = std::min(r.growth, gap / d2);
    if (gap > 1e-14) r.gradient_size = std::min(r.gradient_size, g.squaredNorm() / gap);
    for (Eigen::Index k = 0; k < d; ++k) {
      xp = samples.row(i);
      xp[k] += fd_step;
      loss.gradient(std::span<const double>(xp.data(), static_cast<std::size_t>(d)),
                    std::span<double>(gp.data(), static_cast<std::size_t>(d)));
      r.local_lipschitz = std::max(r.local_lipschitz, (gp - g).norm() / fd_step);
    }
  }
  return r;
}

}  // namespace dissflow
