#include "dissflow/measures.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dissflow/rng.hpp"

namespace dissflow {

namespace {

double unit_uniform(Engine& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

}  // namespace

// BoxDomain ------------------------------------------------------------------

BoxDomain::BoxDomain(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.empty()) throw InvalidArgument("BoxDomain: dimension must be >= 1");
  if (lower_.size() != upper_.size())
    throw InvalidArgument("BoxDomain: lower and upper have different dimensions");
  for (std::size_t k = 0; k < lower_.size(); ++k) {
    if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || !(upper_[k] > lower_[k])) {
      std::ostringstream msg;
      msg << "BoxDomain: axis " << k << " is empty or non-finite [" << lower_[k] << ", " << upper_[k]
          << "]";
      throw InvalidArgument(msg.str());
    }
  }
}

BoxDomain BoxDomain::cube(int dim, double lo, double hi) {
  if (dim < 1) throw InvalidArgument("BoxDomain::cube: dimension must be >= 1");
  return BoxDomain(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
}

double BoxDomain::volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= width(k);
  return v;
}

double BoxDomain::diameter() const {
  double s = 0.0;
  for (int k = 0; k < dim(); ++k) s += width(k) * width(k);
  return std::sqrt(s);
}

bool BoxDomain::contains(std::span<const double> x, double slack) const {
  for (int k = 0; k < dim(); ++k) {
    if (!(x[k] >= lower_[k] - slack && x[k] <= upper_[k] + slack)) return false;
  }
  return true;
}

void BoxDomain::reflect(std::span<double> x) const {
  for (int k = 0; k < dim(); ++k) {
    if (x[k] >= lower_[k] && x[k] <= upper_[k]) continue;
    const double w = width(k);
    double y = std::fmod(x[k] - lower_[k], 2.0 * w);
    if (y < 0.0) y += 2.0 * w;
    if (y > w) y = 2.0 * w - y;
    x[k] = std::clamp(lower_[k] + y, lower_[k], upper_[k]);
  }
}

BoxDomain BoxDomain::inflated(double factor) const {
  std::vector<double> lo(dim()), hi(dim());
  for (int k = 0; k < dim(); ++k) {
    const double c = 0.5 * (lower_[k] + upper_[k]);
    const double half = 0.5 * factor * width(k);
    lo[k] = c - half;
    hi[k] = c + half;
  }
  return BoxDomain(std::move(lo), std::move(hi));
}

// ParticleEnsemble -----------------------------------------------------------

ParticleEnsemble::ParticleEnsemble(BoxDomain dom, Points pos)
    : domain(std::move(dom)), positions(std::move(pos)) {
  if (positions.rows() < 1) throw InvalidArgument("ParticleEnsemble: needs at least one particle");
  if (positions.cols() != domain.dim())
    throw InvalidArgument("ParticleEnsemble: position dimension does not match the domain");
}

void ParticleEnsemble::check_inside(double slack) const {
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    if (!domain.contains({positions.row(i).data(), static_cast<std::size_t>(dim())}, slack)) {
      std::ostringstream msg;
      msg << "particle " << i << " lies outside the domain";
      throw InvalidArgument(msg.str());
    }
  }
}

// GridLayout -----------------------------------------------------------------

GridLayout::GridLayout(BoxDomain domain, std::vector<int> resolution)
    : domain_(std::move(domain)), resolution_(std::move(resolution)) {
  if (static_cast<int>(resolution_.size()) != domain_.dim())
    throw InvalidArgument("GridLayout: resolution has the wrong dimension");
  size_ = 1;
  for (int n : resolution_) {
    if (n < 1) throw InvalidArgument("GridLayout: every axis needs at least one cell");
    size_ *= n;
  }
}

GridLayout GridLayout::uniform(BoxDomain domain, int cells_per_axis) {
  const int d = domain.dim();
  return GridLayout(std::move(domain), std::vector<int>(d, cells_per_axis));
}

double GridLayout::max_spacing() const {
  double h = 0.0;
  for (int k = 0; k < dim(); ++k) h = std::max(h, spacing(k));
  return h;
}

double GridLayout::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= spacing(k);
  return v;
}

void GridLayout::unravel(Eigen::Index flat, std::span<int> multi) const {
  for (int k = dim() - 1; k >= 0; --k) {
    multi[k] = static_cast<int>(flat % resolution_[k]);
    flat /= resolution_[k];
  }
}

Eigen::Index GridLayout::ravel(std::span<const int> multi) const {
  Eigen::Index flat = 0;
  for (int k = 0; k < dim(); ++k) flat = flat * resolution_[k] + multi[k];
  return flat;
}

void GridLayout::center(Eigen::Index flat, std::span<double> x) const {
  for (int k = dim() - 1; k >= 0; --k) {
    const int i = static_cast<int>(flat % resolution_[k]);
    flat /= resolution_[k];
    x[k] = axis_center(k, i);
  }
}

Points GridLayout::centers() const {
  Points c(size_, dim());
  for (Eigen::Index f = 0; f < size_; ++f) center(f, {c.row(f).data(), static_cast<std::size_t>(dim())});
  return c;
}

Eigen::Index GridLayout::locate(std::span<const double> x) const {
  Eigen::Index flat = 0;
  for (int k = 0; k < dim(); ++k) {
    int i = static_cast<int>(std::floor((x[k] - domain_.lower(k)) / spacing(k)));
    i = std::clamp(i, 0, resolution_[k] - 1);
    flat = flat * resolution_[k] + i;
  }
  return flat;
}

// GridDensity ----------------------------------------------------------------

GridDensity::GridDensity(GridLayout grid, Vector vals) : layout(std::move(grid)), values(std::move(vals)) {
  if (values.size() != layout.size()) throw InvalidArgument("GridDensity: value count does not match the grid");
  if ((values.array() < 0.0).any() || !values.allFinite())
    throw InvalidArgument("GridDensity: values must be finite and nonnegative");
}

bool GridDensity::is_normalized(double tol) const { return std::abs(mass() - 1.0) <= tol; }

void GridDensity::normalize() {
  const double m = mass();
  if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("GridDensity::normalize: zero or non-finite mass");
  values /= m;
}

Vector GridDensity::mean() const {
  const int d = layout.dim();
  Vector m = Vector::Zero(d);
  std::vector<double> x(d);
  const double vol = layout.cell_volume();
  for (Eigen::Index f = 0; f < layout.size(); ++f) {
    if (values[f] == 0.0) continue;
    layout.center(f, x);
    for (int k = 0; k < d; ++k) m[k] += values[f] * vol * x[k];
  }
  return m;
}

GridDensity uniform_density(const GridLayout& layout) {
  GridDensity g(layout, Vector::Ones(layout.size()));
  g.normalize();
  return g;
}

GridDensity gaussian_density(const GridLayout& layout, std::span<const double> mean, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_density: sigma must be positive");
  const int d = layout.dim();
  Vector v(layout.size());
  std::vector<double> x(d);
  for (Eigen::Index f = 0; f < layout.size(); ++f) {
    layout.center(f, x);
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) r2 += (x[k] - mean[k]) * (x[k] - mean[k]);
    v[f] = std::exp(-0.5 * r2 / (sigma * sigma));
  }
  GridDensity g(layout, std::move(v));
  g.normalize();
  return g;
}

// Sampling -------------------------------------------------------------------

ParticleEnsemble sample_density(const GridDensity& target, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_density: n must be >= 1");
  if (!target.is_normalized()) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "sample_density: target is not normalized (mass " << target.mass() << ")";
    throw InvalidArgument(msg.str());
  }
  const GridLayout& grid = target.layout;
  const int d = grid.dim();
  std::vector<double> cumulative(grid.size());
  double acc = 0.0;
  for (Eigen::Index f = 0; f < grid.size(); ++f) {
    acc += target.values[f];
    cumulative[f] = acc;
  }
  Engine engine(derive_seed(seed, "sample_density"));
  Points pos(n, d);
  std::vector<int> multi(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = unit_uniform(engine) * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    // Skip back over trailing zero-mass cells that share the final sum.
    Eigen::Index cell = it - cumulative.begin();
    while (target.values[cell] == 0.0 && cell > 0) --cell;
    grid.unravel(cell, multi);
    for (int k = 0; k < d; ++k) {
      const double lo = grid.domain().lower(k) + multi[k] * grid.spacing(k);
      pos(i, k) = std::min(lo + unit_uniform(engine) * grid.spacing(k), grid.domain().upper(k));
    }
  }
  return ParticleEnsemble(grid.domain(), std::move(pos));
}

ParticleEnsemble sample_uniform(const BoxDomain& domain, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_uniform: n must be >= 1");
  Engine engine(derive_seed(seed, "sample_uniform"));
  Points pos(n, domain.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < domain.dim(); ++k) pos(i, k) = domain.lower(k) + unit_uniform(engine) * domain.width(k);
  return ParticleEnsemble(domain, std::move(pos));
}

// Distances ------------------------------------------------------------------

double dist_to_set(std::span<const double> x, const PointSet& set) {
  if (set.points.rows() == 0) throw InvalidArgument("dist_to_set: the point set is empty");
  if (static_cast<Eigen::Index>(x.size()) != set.points.cols())
    throw InvalidArgument("dist_to_set: dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < set.points.rows(); ++j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < set.points.cols(); ++k) {
      const double diff = x[k] - set.points(j, k);
      s += diff * diff;
    }
    best = std::min(best, s);
  }
  return std::sqrt(best);
}

Vector squared_distances_to_set(const ParticleEnsemble& rho, const PointSet& set) {
  Vector out(rho.size());
  const auto d = static_cast<std::size_t>(rho.dim());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    const double r = dist_to_set({rho.positions.row(i).data(), d}, set);
    out[i] = r * r;
  }
  return out;
}

double second_moment_about_set(const ParticleEnsemble& rho, const PointSet& set) {
  return squared_distances_to_set(rho, set).mean();
}

// Serialization ----------------------------------------------------------------

void write_grid_density(std::ostream& out, const GridDensity& density) {
  const GridLayout& g = density.layout;
  out << std::setprecision(17);
  out << "dim " << g.dim() << "\nresolution";
  for (int n : g.resolution()) out << ' ' << n;
  out << "\nlower";
  for (double v : g.domain().lower()) out << ' ' << v;
  out << "\nupper";
  for (double v : g.domain().upper()) out << ' ' << v;
  out << "\nvalues\n";
  const int row = g.resolution().back();
  for (Eigen::Index f = 0; f < g.size(); ++f) {
    out << density.values[f];
    out << (((f + 1) % row == 0) ? '\n' : ' ');
  }
}

GridDensity read_grid_density(std::istream& in) {
  auto expect = [&](const char* key) {
    std::string word;
    if (!(in >> word) || word != key) throw InvalidArgument(std::string("grid density file: expected '") + key + "'");
  };
  int dim = 0;
  expect("dim");
  if (!(in >> dim) || dim < 1) throw InvalidArgument("grid density file: bad dim");
  std::vector<int> res(dim);
  std::vector<double> lo(dim), hi(dim);
  expect("resolution");
  for (auto& n : res)
    if (!(in >> n)) throw InvalidArgument("grid density file: bad resolution");
  expect("lower");
  for (auto& v : lo)
    if (!(in >> v)) throw InvalidArgument("grid density file: bad lower bound");
  expect("upper");
  for (auto& v : hi)
    if (!(in >> v)) throw InvalidArgument("grid density file: bad upper bound");
  expect("values");
  GridLayout layout(BoxDomain(lo, hi), res);
  Vector values(layout.size());
  for (Eigen::Index f = 0; f < layout.size(); ++f)
    if (!(in >> values[f])) throw InvalidArgument("grid density file: too few values");
  return GridDensity(std::move(layout), std::move(values));
}

void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& ensemble) {
  out << std::setprecision(17);
  for (int k = 0; k < ensemble.dim(); ++k) out << (k ? "," : "") << 'x' << k;
  out << '\n';
  for (Eigen::Index i = 0; i < ensemble.size(); ++i) {
    for (int k = 0; k < ensemble.dim(); ++k) out << (k ? "," : "") << ensemble.positions(i, k);
    out << '\n';
  }
}

ParticleEnsemble read_ensemble_csv(std::istream& in, const BoxDomain& domain) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("ensemble csv: missing header");
  std::vector<double> flat;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      flat.push_back(std::stod(cell));
      ++cols;
    }
    if (cols != domain.dim()) throw InvalidArgument("ensemble csv: row has the wrong number of columns");
    ++rows;
  }
  Points pos = Eigen::Map<Points>(flat.data(), rows, domain.dim());
  return ParticleEnsemble(domain, std::move(pos));
}

}  // namespace dissflow
