#include "dissflow/sdot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "dissflow/rng.hpp"

namespace dissflow {

namespace {

void check_sites(const Points& sites, const GridDensity& target) {
  if (sites.rows() == 0) throw InvalidArgument("laguerre: no sites");
  if (sites.cols() != target.layout.dim()) throw InvalidArgument("laguerre: site / target dimension mismatch");
  if (!target.is_normalized(1e-8)) throw InvalidArgument("laguerre: target density is not normalized");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(sites.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < sites.cols(); ++k)
      if (sites(a, k) != sites(b, k)) return sites(a, k) < sites(b, k);
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if ((sites.row(order[k]) - sites.row(order[k - 1])).squaredNorm() == 0.0) {
      std::ostringstream msg;
      msg << "laguerre: sites " << order[k - 1] << " and " << order[k] << " coincide";
      throw InvalidArgument(msg.str());
    }
  }
}

// 1D ------------------------------------------------------------------------------

/// Piecewise-constant density on a 1D grid with exact interval integrals.
class Density1d {
 public:
  explicit Density1d(const GridDensity& g)
      : lo_(g.layout.domain().lower(0)), h_(g.layout.spacing(0)), values_(g.values), cum_(g.values.size() + 1, 0.0) {
    for (Eigen::Index k = 0; k < values_.size(); ++k)
      cum_[static_cast<std::size_t>(k + 1)] = cum_[static_cast<std::size_t>(k)] + values_[k] * h_;
  }

  double lower() const { return lo_; }
  double upper() const { return lo_ + h_ * static_cast<double>(values_.size()); }

  double quantile(double p) const {
    const double total = cum_.back();
    p *= total;
    auto it = std::lower_bound(cum_.begin() + 1, cum_.end(), p);
    if (it == cum_.end()) return upper();
    auto k = static_cast<Eigen::Index>(it - cum_.begin()) - 1;
    while (k < values_.size() - 1 && values_[k] <= 0.0) ++k;
    if (values_[k] <= 0.0) return upper();
    const double left = lo_ + h_ * static_cast<double>(k);
    const double x = left + (p - cum_[static_cast<std::size_t>(k)]) / values_[k];
    return std::clamp(x, left, left + h_);
  }

  /// int_s^e (x - a)^p rho(x) dx for p in {0, 1, 2}.
  double moment(double s, double e, double a, int p) const {
    if (!(e > s)) return 0.0;
    const auto n = values_.size();
    auto first = static_cast<Eigen::Index>(std::floor((s - lo_) / h_));
    first = std::clamp<Eigen::Index>(first, 0, n - 1);
    double sum = 0.0;
    for (Eigen::Index k = first; k < n; ++k) {
      const double l = lo_ + h_ * static_cast<double>(k);
      if (l >= e) break;
      const double a0 = std::max(s, l) - a;
      const double a1 = std::min(e, l + h_) - a;
      if (a1 <= a0) continue;
      double piece = 0.0;
      switch (p) {
        case 0:
          piece = a1 - a0;
          break;
        case 1:
          piece = 0.5 * (a1 * a1 - a0 * a0);
          break;
        default:
          piece = (a1 * a1 * a1 - a0 * a0 * a0) / 3.0;
      }
      sum += values_[k] * piece;
    }
    return sum;
  }

 private:
  double lo_;
  double h_;
  Vector values_;
  std::vector<double> cum_;
};

LaguerreDiagram solve_1d(const Points& sites, const GridDensity& target) {
  const Eigen::Index n = sites.rows();
  const Density1d rho(target);
  LaguerreDiagram out;
  out.sites = sites;
  out.rank.assign(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sites(a, 0) < sites(b, 0); });
  for (Eigen::Index r = 0; r < n; ++r) out.rank[static_cast<std::size_t>(order[r])] = r;

  out.boundaries.resize(static_cast<std::size_t>(n + 1));
  out.boundaries.front() = rho.lower();
  out.boundaries.back() = rho.upper();
  for (Eigen::Index r = 1; r < n; ++r)
    out.boundaries[static_cast<std::size_t>(r)] = rho.quantile(static_cast<double>(r) / static_cast<double>(n));

  out.weights = Vector::Zero(n);
  for (Eigen::Index r = 1; r < n; ++r) {
    const double xp = sites(order[r - 1], 0);
    const double xn = sites(order[r], 0);
    const double b = out.boundaries[static_cast<std::size_t>(r)];
    out.weights[order[r]] = out.weights[order[r - 1]] + (xn - xp) * (xn + xp - 2.0 * b);
  }
  out.weights.array() -= out.weights.mean();

  out.cell_masses.resize(n);
  out.centroids.resize(n, 1);
  out.within_cell_variance.resize(n);
  const double target_mass = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(out.rank[static_cast<std::size_t>(i)]);
    const double s = out.boundaries[r];
    const double e = out.boundaries[r + 1];
    const double m = rho.moment(s, e, 0.0, 0);
    const double c = m > 0.0 ? s + rho.moment(s, e, s, 1) / m : 0.5 * (s + e);
    out.cell_masses[i] = m;
    out.centroids(i, 0) = c;
    out.within_cell_variance[i] = rho.moment(s, e, c, 2);
    out.max_mass_defect = std::max(out.max_mass_defect, std::abs(m - target_mass));
  }
  return out;
}

// d >= 2 ---------------------------------------------------------------------------

/// Uniform bucket grid over the sites for power-distance queries.
class SiteBuckets {
 public:
  static constexpr int kMaxDim = 8;

  SiteBuckets(const Points& sites, const BoxDomain& box) : sites_(sites), box_(box), dim_(box.dim()) {
    if (dim_ > kMaxDim) throw InvalidArgument("laguerre: dimension above 8 is not supported");
    const auto n = static_cast<double>(sites.rows());
    const int per_axis = std::max(1, static_cast<int>(std::ceil(std::pow(n, 1.0 / dim_))));
    cells_.assign(static_cast<std::size_t>(dim_), per_axis);
    width_.resize(static_cast<std::size_t>(dim_));
    min_width_ = std::numeric_limits<double>::infinity();
    total_ = 1;
    for (int k = 0; k < dim_; ++k) {
      width_[static_cast<std::size_t>(k)] = box.width(k) / per_axis;
      min_width_ = std::min(min_width_, width_[static_cast<std::size_t>(k)]);
      total_ *= per_axis;
    }
    start_.assign(static_cast<std::size_t>(total_ + 1), 0);
    std::vector<int> home(static_cast<std::size_t>(sites.rows()));
    std::vector<int> multi(static_cast<std::size_t>(dim_));
    for (Eigen::Index i = 0; i < sites.rows(); ++i) {
      for (int k = 0; k < dim_; ++k) multi[static_cast<std::size_t>(k)] = axis_cell(k, sites(i, k));
      home[static_cast<std::size_t>(i)] = flat(multi);
      ++start_[static_cast<std::size_t>(home[static_cast<std::size_t>(i)] + 1)];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    items_.resize(static_cast<std::size_t>(sites.rows()));
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (Eigen::Index i = 0; i < sites.rows(); ++i)
      items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(home[static_cast<std::size_t>(i)])]++)] =
          static_cast<Eigen::Index>(i);
    max_ring_ = *std::max_element(cells_.begin(), cells_.end());
  }

  /// argmin_i |x - x_i|^2 - shifted[i], with shifted <= 0.
  Eigen::Index nearest(const double* x, const Vector& shifted, double& best) const {
    std::array<int, kMaxDim> center{};
    std::array<int, kMaxDim> off{};
    for (int k = 0; k < dim_; ++k) center[static_cast<std::size_t>(k)] = axis_cell(k, x[k]);
    best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = -1;
    for (int r = 0; r <= max_ring_; ++r) {
      std::fill(off.begin(), off.begin() + dim_, -r);
      while (true) {
        int cheb = 0;
        bool inside = true;
        int b = 0;
        for (int k = 0; k < dim_; ++k) {
          const auto uk = static_cast<std::size_t>(k);
          cheb = std::max(cheb, std::abs(off[uk]));
          const int c = center[uk] + off[uk];
          if (c < 0 || c >= cells_[uk]) inside = false;
          b = b * cells_[uk] + c;
        }
        if (cheb == r && inside) {
          for (int p = start_[static_cast<std::size_t>(b)]; p < start_[static_cast<std::size_t>(b + 1)]; ++p) {
            const Eigen::Index i = items_[static_cast<std::size_t>(p)];
            const double* xi = sites_.row(i).data();
            double d2 = 0.0;
            for (int k = 0; k < dim_; ++k) d2 += (x[k] - xi[k]) * (x[k] - xi[k]);
            const double c = d2 - shifted[i];
            if (c < best || (c == best && i < arg)) {
              best = c;
              arg = i;
            }
          }
        }
        int k = 0;
        while (k < dim_ && ++off[static_cast<std::size_t>(k)] > r) off[static_cast<std::size_t>(k++)] = -r;
        if (k == dim_) break;
      }
      const double reach = r * min_width_;
      if (arg >= 0 && reach * reach >= best) break;
    }
    return arg;
  }

 private:
  int axis_cell(int k, double v) const {
    const int c = static_cast<int>(std::floor((v - box_.lower(k)) / width_[static_cast<std::size_t>(k)]));
    return std::clamp(c, 0, cells_[static_cast<std::size_t>(k)] - 1);
  }
  int flat(const std::vector<int>& multi) const {
    int f = 0;
    for (int k = 0; k < dim_; ++k) f = f * cells_[static_cast<std::size_t>(k)] + multi[static_cast<std::size_t>(k)];
    return f;
  }

  const Points& sites_;
  const BoxDomain& box_;
  int dim_;
  std::vector<int> cells_;
  std::vector<double> width_;
  double min_width_ = 0.0;
  int total_ = 1;
  int max_ring_ = 0;
  std::vector<int> start_;
  std::vector<Eigen::Index> items_;
};

struct Assignment {
  std::vector<Eigen::Index> owner;
  Vector masses;
  double dual = 0.0;
};

Assignment assign_cells(const SiteBuckets& buckets, const Points& centers, const Vector& cell_mass, const Vector& w,
                        Eigen::Index n) {
  Assignment a;
  a.owner.resize(static_cast<std::size_t>(centers.rows()));
  a.masses = Vector::Zero(n);
  const double wmax = w.maxCoeff();
  const Vector shifted = w.array() - wmax;
  double dual = 0.0;
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    double best = 0.0;
    const Eigen::Index i = buckets.nearest(centers.row(k).data(), shifted, best);
    a.owner[static_cast<std::size_t>(k)] = i;
    a.masses[i] += cell_mass[k];
    dual += cell_mass[k] * (best - wmax);
  }
  a.dual = dual + w.sum() / static_cast<double>(n);
  return a;
}

/// Newton direction for the dual: solves L delta = g with L the derivative
/// of the cell masses in the weights. L_ij = -int_{G_ij} rho / (2 |x_i - x_j|)
/// with the facet integral estimated from the grid faces separating the two
/// cells, each face projected on the facet normal.
Vector newton_direction(const Points& sites, const GridDensity& target, const std::vector<Eigen::Index>& owner,
                        const Vector& g) {
  const GridLayout& grid = target.layout;
  const int d = grid.dim();
  const Eigen::Index n = sites.rows();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Eigen::Index> stride(static_cast<std::size_t>(d));
  Eigen::Index acc = 1;
  for (int a = d - 1; a >= 0; --a) {
    stride[static_cast<std::size_t>(a)] = acc;
    acc *= grid.cells(a);
  }
  std::vector<int> multi(static_cast<std::size_t>(d));
  Vector diag = Vector::Zero(n);
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    grid.unravel(k, multi);
    const Eigen::Index i = owner[static_cast<std::size_t>(k)];
    for (int a = 0; a < d; ++a) {
      if (multi[static_cast<std::size_t>(a)] + 1 >= grid.cells(a)) continue;
      const Eigen::Index k2 = k + stride[static_cast<std::size_t>(a)];
      const Eigen::Index j = owner[static_cast<std::size_t>(k2)];
      if (i == j) continue;
      const double dist = (sites.row(i) - sites.row(j)).norm();
      const double normal = std::abs(sites(j, a) - sites(i, a)) / dist;
      const double face = grid.cell_volume() / grid.spacing(a);
      const double c = 0.5 * (target.values[k] + target.values[k2]) * face * normal / (2.0 * dist);
      trip.emplace_back(i, j, -c);
      trip.emplace_back(j, i, -c);
      diag[i] += c;
      diag[j] += c;
    }
  }
  const double top = diag.maxCoeff() > 0.0 ? diag.maxCoeff() : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, (diag[i] > 0.0 ? diag[i] : top) + 1e-10 * top);
  Eigen::SparseMatrix<double> lap(n, n);
  lap.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
  if (solver.info() != Eigen::Success) return Vector::Zero(n);
  Vector delta = solver.solve(g);
  if (!delta.allFinite()) return Vector::Zero(n);
  return delta;
}

LaguerreDiagram solve_grid(const Points& sites, const GridDensity& target, const LaguerreOptions& opts,
                           const Vector* warm) {
  const Eigen::Index n = sites.rows();
  const GridLayout& grid = target.layout;
  const int d = grid.dim();
  const Points centers = grid.centers();
  const Vector cell_mass = target.cell_masses();
  const SiteBuckets buckets(sites, grid.domain());
  const double target_mass = 1.0 / static_cast<double>(n);
  const double rho_max = target.values.maxCoeff();
  const double eta0 = opts.step / rho_max;
  double eta = eta0;

  Vector w = warm && warm->size() == n ? *warm : Vector::Zero(n);
  Assignment cur = assign_cells(buckets, centers, cell_mass, w, n);
  int it = 0;
  double defect = (cur.masses.array() - target_mass).abs().maxCoeff();
  while (defect > opts.mass_tol) {
    if (++it > opts.max_iter) {
      std::ostringstream msg;
      msg << "laguerre: no convergence in " << opts.max_iter << " iterations (worst mass defect " << defect << ")";
      throw NumericalError(msg.str());
    }
    const Vector g = target_mass - cur.masses.array();
    if (opts.method == LaguerreOptions::Method::newton) {
      const Vector delta = newton_direction(sites, target, cur.owner, g);
      const double slope = g.dot(delta);
      const double floor_mass = 0.5 * std::min(cur.masses.minCoeff(), target_mass);
      bool accepted = false;
      for (double t = 1.0; t >= 1.0 / 1024.0 && slope > 0.0; t *= 0.5) {
        const Vector trial_w = w + t * delta;
        Assignment trial = assign_cells(buckets, centers, cell_mass, trial_w, n);
        if (trial.dual >= cur.dual + 1e-4 * t * slope && trial.masses.minCoeff() >= floor_mass) {
          w = trial_w;
          cur = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (accepted) {
        defect = (cur.masses.array() - target_mass).abs().maxCoeff();
        continue;
      }
    }
    const Vector trial_w = w + eta * g;
    Assignment trial = assign_cells(buckets, centers, cell_mass, trial_w, n);
    if (trial.dual < cur.dual - 1e-15 * std::abs(cur.dual)) {
      eta *= 0.5;
      continue;
    }
    w = trial_w;
    cur = std::move(trial);
    eta = std::min(eta0, 1.25 * eta);
    defect = (cur.masses.array() - target_mass).abs().maxCoeff();
  }

  LaguerreDiagram out;
  out.sites = sites;
  out.weights = w.array() - w.mean();
  out.cell_masses = cur.masses;
  out.owner = std::move(cur.owner);
  out.iterations = it;
  out.max_mass_defect = defect;
  out.centroids = Points::Zero(n, d);
  for (Eigen::Index k = 0; k < centers.rows(); ++k)
    out.centroids.row(out.owner[static_cast<std::size_t>(k)]) += cell_mass[k] * centers.row(k);
  double subcell = 0.0;
  for (int a = 0; a < d; ++a) subcell += grid.spacing(a) * grid.spacing(a) / 12.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.cell_masses[i] > 0.0)
      out.centroids.row(i) /= out.cell_masses[i];
    else
      out.centroids.row(i) = sites.row(i);
  }
  out.within_cell_variance = subcell * out.cell_masses;
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const Eigen::Index i = out.owner[static_cast<std::size_t>(k)];
    out.within_cell_variance[i] += cell_mass[k] * (centers.row(k) - out.centroids.row(i)).squaredNorm();
  }
  return out;
}

}  // namespace

LaguerreDiagram solve_laguerre(const Points& sites, const GridDensity& target, const LaguerreOptions& opts,
                               const Vector* warm) {
  if (!(opts.mass_tol > 0.0) || opts.max_iter < 1 || !(opts.step > 0.0))
    throw InvalidArgument("laguerre: invalid options");
  check_sites(sites, target);
  if (target.layout.dim() == 1) return solve_1d(sites, target);
  return solve_grid(sites, target, opts, warm);
}

SdotEnergy sdot_energy(const LaguerreDiagram& diagram, const Points& sites, const GridDensity& target) {
  if (sites.rows() != diagram.sites.rows() || sites.cols() != diagram.sites.cols() ||
      (sites - diagram.sites).cwiseAbs().maxCoeff() > 0.0)
    throw InvalidArgument("sdot_energy: diagram is stale (solved for different sites)");
  SdotEnergy e;
  const Eigen::Index n = sites.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    e.bias += diagram.cell_masses[i] * (sites.row(i) - diagram.centroids.row(i)).squaredNorm();
    e.variance += diagram.within_cell_variance[i];
  }
  if (target.layout.dim() == 1) {
    const Density1d rho(target);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(diagram.rank[static_cast<std::size_t>(i)]);
      e.energy += rho.moment(diagram.boundaries[r], diagram.boundaries[r + 1], sites(i, 0), 2);
    }
  } else {
    const GridLayout& grid = target.layout;
    const Vector cell_mass = target.cell_masses();
    double subcell = 0.0;
    for (int a = 0; a < grid.dim(); ++a) subcell += grid.spacing(a) * grid.spacing(a) / 12.0;
    std::vector<double> x(static_cast<std::size_t>(grid.dim()));
    for (Eigen::Index k = 0; k < grid.size(); ++k) {
      grid.center(k, x);
      const Eigen::Index i = diagram.owner[static_cast<std::size_t>(k)];
      double d2 = subcell;
      for (int a = 0; a < grid.dim(); ++a) d2 += (x[static_cast<std::size_t>(a)] - sites(i, a)) * (x[static_cast<std::size_t>(a)] - sites(i, a));
      e.energy += cell_mass[k] * d2;
    }
  }
  return e;
}

Points sdot_flow_step(const Points& sites, const LaguerreDiagram& diagram, double dt) {
  if (!(dt > 0.0 && dt <= 1.0)) throw InvalidArgument("sdot_flow_step: dt must lie in (0, 1]");
  if (sites.rows() != diagram.sites.rows()) throw InvalidArgument("sdot_flow_step: diagram size mismatch");
  return sites + dt * (diagram.centroids - sites);
}

SdotRun run_sdot_flow(const Points& sites0, const GridDensity& target, const SdotFlowOptions& opts) {
  if (opts.max_steps < 1 || !(opts.stationary_tol > 0.0)) throw InvalidArgument("sdot flow: invalid options");
  SdotRun run;
  Points sites = sites0;
  LaguerreDiagram diagram = solve_laguerre(sites, target, opts.laguerre);
  run.times.push_back(0.0);
  run.energies.push_back(sdot_energy(diagram, sites, target));
  for (int step = 1; step <= opts.max_steps; ++step) {
    sites = sdot_flow_step(sites, diagram, opts.dt);
    const Vector warm = diagram.weights;
    diagram = solve_laguerre(sites, target, opts.laguerre, &warm);
    const SdotEnergy e = sdot_energy(diagram, sites, target);
    const double prev = run.energies.back().energy;
    run.times.push_back(step * opts.dt);
    run.energies.push_back(e);
    if (prev > 0.0 && (prev - e.energy) / prev / opts.dt < opts.stationary_tol) {
      run.stationary = true;
      break;
    }
  }
  run.final_sites = std::move(sites);
  run.final_diagram = std::move(diagram);
  return run;
}

Points initial_sites(const GridDensity& target, Eigen::Index n, std::uint64_t seed) {
  return sample_density(target, n, seed).positions;
}

QuantizationReport quantization_sweep(const GridDensity& target, const std::vector<Eigen::Index>& ns,
                                      const SdotFlowOptions& opts, std::uint64_t seed) {
  if (ns.size() < 2) throw InvalidArgument("quantization sweep: need at least two values of N");
  for (std::size_t k = 1; k < ns.size(); ++k)
    if (ns[k] <= ns[k - 1]) throw InvalidArgument("quantization sweep: N values must increase");
  QuantizationReport rep;
  rep.ns = ns;
  for (Eigen::Index n : ns) {
    double energy = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    try {
      const SdotRun run =
          run_sdot_flow(initial_sites(target, n, derive_seed(seed, static_cast<std::uint64_t>(n))), target, opts);
      energy = run.energies.back().energy;
      ok = run.stationary;
    } catch (const NumericalError&) {
      ok = false;
    }
    rep.energies.push_back(energy);
    rep.converged.push_back(ok);
  }
  rep.in_window.assign(ns.size(), false);
  std::vector<std::size_t> good;
  for (std::size_t k = 0; k < ns.size(); ++k)
    if (rep.converged[k]) good.push_back(k);
  if (good.size() < 2) throw NumericalError("quantization sweep: fewer than two converged runs");
  std::size_t first = good.size() - 1;
  while (first > 0 && rep.energies[good[first - 1]] > rep.energies[good[first]]) --first;
  if (first == good.size() - 1) throw NumericalError("quantization sweep: energies do not decrease at the largest N");
  std::vector<double> lx, ly;
  for (std::size_t k = first; k < good.size(); ++k) {
    rep.in_window[good[k]] = true;
    lx.push_back(std::log(static_cast<double>(ns[good[k]])));
    ly.push_back(std::log(rep.energies[good[k]]));
  }
  const auto m = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  rep.constant = std::exp(rep.intercept);
  double ss = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double r = ly[k] - rep.intercept - rep.slope * lx[k];
    ss += r * r;
  }
  rep.residual = std::sqrt(ss / m);
  return rep;
}

void write_diagram_csv(std::ostream& out, const LaguerreDiagram& diagram) {
  const Eigen::Index d = diagram.sites.cols();
  out << "site";
  for (Eigen::Index k = 0; k < d; ++k) out << ",x" << k;
  out << ",weight,mass";
  for (Eigen::Index k = 0; k < d; ++k) out << ",c" << k;
  out << ",within_cell_variance\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < diagram.size(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << diagram.sites(i, k);
    out << ',' << diagram.weights[i] << ',' << diagram.cell_masses[i];
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << diagram.centroids(i, k);
    out << ',' << diagram.within_cell_variance[i] << '\n';
  }
}

void write_quantization_csv(std::ostream& out, const QuantizationReport& report) {
  out << "N,ultimate_energy,converged,slope_window\n";
  out.precision(17);
  for (std::size_t k = 0; k < report.ns.size(); ++k)
    out << report.ns[k] << ',' << report.energies[k] << ',' << (report.converged[k] ? 1 : 0) << ','
        << (report.in_window[k] ? 1 : 0) << '\n';
  out << "# slope=" << report.slope << " constant=" << report.constant << " residual=" << report.residual << '\n';
}

}  // namespace dissflow
