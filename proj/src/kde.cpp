#include "dissflow/kde.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

namespace dissflow {

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  throw InvalidArgument("unknown kernel family '" + name + "' (expected gaussian or epanechnikov)");
}

std::string to_string(KernelFamily family) {
  return family == KernelFamily::gaussian ? "gaussian" : "epanechnikov";
}

void KernelSpec::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidArgument("kernel: bandwidth must be positive");
  if (dim < 1) throw InvalidArgument("kernel: dimension must be >= 1");
}

double KernelSpec::mu1() const {
  const double d = dim;
  if (family == KernelFamily::gaussian)
    return std::numbers::sqrt2 * std::exp(std::lgamma((d + 1.0) / 2.0) - std::lgamma(d / 2.0));
  return d * (d + 2.0) / ((d + 1.0) * (d + 3.0));
}

double KernelSpec::mu2() const {
  const double d = dim;
  if (family == KernelFamily::gaussian) return d;
  return d / (d + 4.0);
}

double KernelSpec::operator()(double r2) const {
  const double h = bandwidth;
  const double d = dim;
  if (family == KernelFamily::gaussian)
    return std::exp(-0.5 * r2 / (h * h)) / std::pow(2.0 * std::numbers::pi * h * h, d / 2.0);
  const double s = r2 / (h * h);
  if (s >= 1.0) return 0.0;
  // Unit-ball volume V_d = pi^(d/2) / Gamma(d/2 + 1); c_d = (d + 2) / (2 V_d).
  const double vd = std::exp(0.5 * d * std::log(std::numbers::pi) - std::lgamma(d / 2.0 + 1.0));
  return (d + 2.0) / (2.0 * vd) * (1.0 - s) / std::pow(h, d);
}

double KernelSpec::cutoff() const { return family == KernelFamily::gaussian ? 7.0 * bandwidth : bandwidth; }

double bandwidth_rule(Eigen::Index n, double c, int d) {
  if (n < 1) throw InvalidArgument("bandwidth_rule: N must be >= 1");
  if (!(c > 0.0)) throw InvalidArgument("bandwidth_rule: c must be positive");
  if (d < 1) throw InvalidArgument("bandwidth_rule: d must be >= 1");
  return c * std::pow(static_cast<double>(n), -1.0 / (d + 2.0));
}

// KernelGridWeights -------------------------------------------------------------

namespace {

struct AxisRange {
  int lo = 0;
  int hi = -1;
};

AxisRange cells_within(const GridLayout& g, int axis, double x, double radius) {
  const double h = g.spacing(axis);
  const double lower = g.domain().lower(axis);
  AxisRange r;
  r.lo = std::max(0, static_cast<int>(std::floor((x - radius - lower) / h - 0.5)));
  r.hi = std::min(g.cells(axis) - 1, static_cast<int>(std::ceil((x + radius - lower) / h - 0.5)));
  return r;
}

// Iterates the multi-indices of a box of cells, last axis fastest.
template <class Fn>
void for_box(const std::vector<AxisRange>& box, Fn&& fn) {
  const int d = static_cast<int>(box.size());
  for (const auto& r : box)
    if (r.hi < r.lo) return;
  std::vector<int> multi(d);
  for (int k = 0; k < d; ++k) multi[k] = box[k].lo;
  while (true) {
    fn(multi);
    int k = d - 1;
    while (k >= 0 && multi[k] == box[k].hi) {
      multi[k] = box[k].lo;
      --k;
    }
    if (k < 0) return;
    ++multi[k];
  }
}

}  // namespace

KernelGridWeights::KernelGridWeights(const Points& sites, const KernelSpec& kernel, const GridLayout& grid)
    : sites_(sites), kernel_(kernel), grid_(grid) {
  kernel_.validate();
  if (sites.cols() != grid.dim() || kernel.dim != grid.dim())
    throw InvalidArgument("kernel weights: dimension mismatch between sites, kernel and grid");
  norms_.resize(sites.rows());
  for (Eigen::Index i = 0; i < sites.rows(); ++i) {
    double mass = 0.0;
    const int d = grid.dim();
    if (kernel_.family == KernelFamily::gaussian) {
      const double h = kernel_.bandwidth;
      mass = 1.0;
      for (int k = 0; k < d; ++k) {
        const AxisRange r = cells_within(grid, k, sites(i, k), kernel_.cutoff());
        double s = 0.0;
        for (int j = r.lo; j <= r.hi; ++j) {
          const double z = grid.axis_center(k, j) - sites(i, k);
          s += std::exp(-0.5 * z * z / (h * h));
        }
        mass *= s * grid.spacing(k) / (std::sqrt(2.0 * std::numbers::pi) * h);
      }
    } else {
      std::vector<AxisRange> box(d);
      for (int k = 0; k < d; ++k) box[k] = cells_within(grid, k, sites(i, k), kernel_.cutoff());
      for_box(box, [&](const std::vector<int>& multi) {
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) {
          const double z = grid.axis_center(k, multi[k]) - sites(i, k);
          r2 += z * z;
        }
        mass += kernel_(r2) * grid.cell_volume();
      });
    }
    // A kernel narrower than the grid can miss every cell center; leave it
    // unnormalized then.
    norms_[i] = mass > 0.0 ? mass : 1.0;
  }
}

void KernelGridWeights::for_each(Eigen::Index i, const std::function<void(Eigen::Index, double)>& fn) const {
  const int d = grid_.dim();
  std::vector<AxisRange> box(d);
  for (int k = 0; k < d; ++k) box[k] = cells_within(grid_, k, sites_(i, k), kernel_.cutoff());
  if (kernel_.family == KernelFamily::gaussian) {
    const double h = kernel_.bandwidth;
    std::vector<std::vector<double>> axis(d);
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = box[k].lo; j <= box[k].hi; ++j) {
        const double z = grid_.axis_center(k, j) - sites_(i, k);
        axis[k].push_back(std::exp(-0.5 * z * z / (h * h)));
        s += axis[k].back();
      }
      if (!(s > 0.0)) {
        // Kernel narrower than the grid: all mass to the containing cell.
        std::vector<double> x(sites_.row(i).data(), sites_.row(i).data() + d);
        fn(grid_.locate(x), 1.0);
        return;
      }
      for (double& w : axis[k]) w /= s;
    }
    for_box(box, [&](const std::vector<int>& multi) {
      double w = 1.0;
      for (int k = 0; k < d; ++k) w *= axis[k][multi[k] - box[k].lo];
      if (w > 0.0) fn(grid_.ravel(multi), w);
    });
    return;
  }
  std::vector<std::pair<Eigen::Index, double>> cells;
  double total = 0.0;
  for_box(box, [&](const std::vector<int>& multi) {
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double z = grid_.axis_center(k, multi[k]) - sites_(i, k);
      r2 += z * z;
    }
    const double w = kernel_(r2);
    if (w > 0.0) {
      cells.emplace_back(grid_.ravel(multi), w);
      total += w;
    }
  });
  if (!(total > 0.0)) {
    std::vector<double> x(sites_.row(i).data(), sites_.row(i).data() + d);
    fn(grid_.locate(x), 1.0);
    return;
  }
  for (const auto& [cell, w] : cells) fn(cell, w / total);
}

GridDensity kde_evaluate(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& grid) {
  if (z.size() == 0) throw InvalidArgument("kde_evaluate: empty ensemble");
  const KernelGridWeights weights(z.positions, kernel, grid);
  Vector values = Vector::Zero(grid.size());
  const double scale = 1.0 / (static_cast<double>(z.size()) * grid.cell_volume());
  for (Eigen::Index i = 0; i < z.size(); ++i) weights.for_each(i, [&](Eigen::Index c, double w) { values[c] += w * scale; });
  return GridDensity(grid, std::move(values));
}

// Nadaraya field ------------------------------------------------------------------

Points NadarayaField::at(const Points& query) const {
  const Eigen::Index n = sites.rows();
  const double cut2 = kernel.cutoff() * kernel.cutoff();
  Points out(query.rows(), sites.cols());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(sites.cols());
    double den = 0.0;
    Eigen::Index nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double r2 = (query.row(q) - sites.row(j)).squaredNorm();
      if (r2 < best) {
        best = r2;
        nearest = j;
      }
      if (r2 >= cut2) continue;
      const double k = kernel(r2) / norms[j];
      num += k * agent_gradients.row(j);
      den += k;
    }
    if (den / static_cast<double>(n) < floor) {
      out.row(q) = agent_gradients.row(nearest);
    } else {
      out.row(q) = num / den;
    }
  }
  return out;
}

Vector NadarayaField::density(const Points& query) const {
  const double cut2 = kernel.cutoff() * kernel.cutoff();
  Vector out = Vector::Zero(query.rows());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    for (Eigen::Index j = 0; j < sites.rows(); ++j) {
      const double r2 = (query.row(q) - sites.row(j)).squaredNorm();
      if (r2 < cut2) out[q] += kernel(r2) / norms[j];
    }
    out[q] /= static_cast<double>(sites.rows());
  }
  return out;
}

VelocityField NadarayaField::as_velocity_field() const {
  VelocityField f;
  f.provenance = "nadaraya";
  const NadarayaField self = *this;
  f.evaluate = [self](const ParticleEnsemble& rho, double) { return self.at(rho.positions); };
  return f;
}

NadarayaField nadaraya_velocity(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& quadrature,
                                const Points& ideal_on_cells, double floor) {
  kernel.validate();
  if (quadrature.max_spacing() > 0.5 * kernel.bandwidth * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "nadaraya_velocity: quadrature spacing " << quadrature.max_spacing() << " exceeds h/2 = "
        << 0.5 * kernel.bandwidth << " (undersampled convolution)";
    throw InvalidArgument(msg.str());
  }
  if (ideal_on_cells.rows() != quadrature.size() || ideal_on_cells.cols() != quadrature.dim())
    throw InvalidArgument("nadaraya_velocity: ideal field must have one d-vector per quadrature cell");
  const KernelGridWeights weights(z.positions, kernel, quadrature);
  NadarayaField field;
  field.kernel = kernel;
  field.sites = z.positions;
  field.floor = floor;
  field.agent_gradients = Points::Zero(z.size(), z.dim());
  field.norms.resize(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    weights.for_each(i, [&](Eigen::Index c, double w) { field.agent_gradients.row(i) += w * ideal_on_cells.row(c); });
    field.norms[i] = weights.norm(i);
  }
  return field;
}

NadarayaField nadaraya_velocity(const ParticleEnsemble& z, const KernelSpec& kernel, const GridLayout& quadrature,
                                const std::function<Points(const Points&)>& ideal, double floor) {
  return nadaraya_velocity(z, kernel, quadrature, ideal(quadrature.centers()), floor);
}

double kde_perturbation_bound(double lipschitz, const KernelSpec& kernel) {
  if (!(lipschitz >= 0.0)) throw InvalidArgument("kde_perturbation_bound: L must be nonnegative");
  kernel.validate();
  const double h = kernel.bandwidth;
  const double m1 = kernel.mu1();
  return 2.0 * lipschitz * lipschitz * (kernel.mu2() + m1 * m1) * h * h;
}

double nadaraya_error_l2(const NadarayaField& field, const GridLayout& grid,
                         const std::function<Points(const Points&)>& ideal) {
  const Points c = grid.centers();
  const Points diff = field.at(c) - ideal(c);
  const Vector rho = field.density(c);
  double total = 0.0;
  for (Eigen::Index q = 0; q < c.rows(); ++q) total += rho[q] * diff.row(q).squaredNorm();
  return total * grid.cell_volume();
}

double nadaraya_error_at_agents(const NadarayaField& field, const std::function<Points(const Points&)>& ideal) {
  const Points diff = field.at(field.sites) - ideal(field.sites);
  return diff.squaredNorm() / static_cast<double>(field.sites.rows());
}

void write_agent_gradients(std::ostream& out, const NadarayaField& field) {
  out << std::setprecision(17) << "agent";
  for (Eigen::Index k = 0; k < field.agent_gradients.cols(); ++k) out << ",g" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < field.agent_gradients.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < field.agent_gradients.cols(); ++k) out << ',' << field.agent_gradients(i, k);
    out << '\n';
  }
}

}  // namespace dissflow
