#include "dissflow/demo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <boost/math/distributions/normal.hpp>

#include "dissflow/kde.hpp"
#include "dissflow/transport.hpp"

namespace dissflow {

namespace {

GridLayout unit_line(int cells) { return GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), cells); }

void finish(DiscriminationDemo& demo, const std::vector<std::string>& names) {
  demo.rows.clear();
  for (std::size_t i = 0; i < demo.candidates.size(); ++i)
    demo.rows.push_back({names[i], l2_density_distance(demo.candidates[i], demo.reference),
                         w2_grid_1d(demo.candidates[i], demo.reference)});
  demo.l2_spread = 0.0;
  demo.w2_strictly_ordered = true;
  for (std::size_t i = 1; i < demo.rows.size(); ++i) {
    demo.l2_spread = std::max(demo.l2_spread, std::abs(demo.rows[i].l2 - demo.rows[0].l2));
    demo.w2_strictly_ordered = demo.w2_strictly_ordered && demo.rows[i].w2 < demo.rows[i - 1].w2;
  }
  demo.pass = demo.l2_spread <= 1e-10 && demo.w2_strictly_ordered;
}

void write_table(const std::filesystem::path& path, const DiscriminationDemo& demo) {
  std::ofstream out(path);
  out.precision(17);
  out << "name,L2,W2\n";
  for (const auto& r : demo.rows) out << r.name << ',' << r.l2 << ',' << r.w2 << '\n';
}

void write_densities(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const std::vector<const GridDensity*>& cols) {
  std::ofstream out(path);
  out.precision(17);
  out << 'x';
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  const GridLayout& g = cols.front()->layout;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    out << g.axis_center(0, static_cast<int>(k));
    for (const auto* c : cols) out << ',' << c->values[k];
    out << '\n';
  }
}

}  // namespace

DiscriminationDemo bump_discrimination(int cells) {
  if (cells < 120 || cells % 12 != 0) throw InvalidArgument("bump_discrimination: cells must be a multiple of 12, >= 120");
  const GridLayout grid = unit_line(cells);
  const int width = cells / 6;
  // Skewed profile x (1 - x)^3 on (0, 1).
  std::vector<double> profile(static_cast<std::size_t>(width));
  for (int k = 0; k < width; ++k) {
    const double x = (k + 0.5) / width;
    profile[static_cast<std::size_t>(k)] = x * std::pow(1.0 - x, 3);
  }
  auto place = [&](int start, bool mirror) {
    Vector v = Vector::Zero(grid.size());
    for (int k = 0; k < width; ++k) v[start + k] = profile[static_cast<std::size_t>(mirror ? width - 1 - k : k)];
    GridDensity g(grid, v);
    g.normalize();
    return g;
  };
  DiscriminationDemo demo;
  demo.reference = place(cells / 12, false);
  demo.candidates = {place(cells - cells / 12 - width, false), place(cells / 12 + width + cells / 12, true)};
  finish(demo, {"far", "near"});
  return demo;
}

DiscriminationDemo step_discrimination(int cells) {
  if (cells < 16 || cells % 8 != 0) throw InvalidArgument("step_discrimination: cells must be a multiple of 8, >= 16");
  const GridLayout grid = unit_line(cells);
  auto blocks = [&](int count) {
    // `count` blocks of height 2, each followed by an empty gap of equal width.
    Vector v = Vector::Zero(grid.size());
    const int w = cells / (2 * count);
    for (int b = 0; b < count; ++b)
      for (int k = 0; k < w; ++k) v[2 * b * w + k] = 2.0;
    return GridDensity(grid, v);
  };
  DiscriminationDemo demo;
  demo.reference = uniform_density(grid);
  demo.candidates = {blocks(1), blocks(4)};
  finish(demo, {"coarse", "fine"});
  return demo;
}

int count_modes(const GridDensity& density, double floor) {
  if (density.layout.dim() != 1) throw InvalidArgument("count_modes: one-dimensional densities only");
  const Vector& v = density.values;
  const double cut = floor * v.maxCoeff();
  int modes = 0;
  Eigen::Index k = 0;
  const Eigen::Index n = v.size();
  while (k < n) {
    Eigen::Index end = k;
    while (end + 1 < n && v[end + 1] == v[k]) ++end;
    const bool left = k == 0 || v[k - 1] < v[k];
    const bool right = end == n - 1 || v[end + 1] < v[k];
    if (left && right && v[k] > cut) ++modes;
    k = end + 1;
  }
  return modes;
}

InterpolationDemo gaussian_interpolation(double separation, Eigen::Index n, int cells) {
  if (!(separation > 0.0) || n < 10 || cells < 10) throw InvalidArgument("gaussian_interpolation: bad arguments");
  const double half = 0.5 * separation;
  const BoxDomain box = BoxDomain::cube(1, -half - 4.0, half + 4.0);
  InterpolationDemo demo;
  demo.grid = GridLayout::uniform(box, cells);
  const boost::math::normal unit;
  Points pa(n, 1), pb(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = boost::math::quantile(unit, (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    pa(i, 0) = std::clamp(z - half, box.lower(0), box.upper(0));
    pb(i, 0) = std::clamp(z + half, box.lower(0), box.upper(0));
  }
  demo.a = ParticleEnsemble(box, pa);
  demo.b = ParticleEnsemble(box, pb);

  KernelSpec kernel;
  kernel.family = KernelFamily::gaussian;
  kernel.dim = 1;
  kernel.bandwidth = 0.25;
  demo.kde_a = kde_evaluate(demo.a, kernel, demo.grid);
  demo.kde_b = kde_evaluate(demo.b, kernel, demo.grid);
  const ParticleEnsemble mid = displacement_interpolate(demo.a, demo.b, 0.5);
  demo.displacement_mid = kde_evaluate(mid, kernel, demo.grid);
  demo.linear_mid = GridDensity(demo.grid, 0.5 * (demo.kde_a.values + demo.kde_b.values));
  demo.displacement_modes = count_modes(demo.displacement_mid);
  demo.linear_modes = count_modes(demo.linear_mid);

  demo.mid_mean = mid.positions.col(0).mean();
  demo.mid_sd = std::sqrt((mid.positions.col(0).array() - demo.mid_mean).square().mean());

  const ParticleEnsemble start = displacement_interpolate(demo.a, demo.b, 0.0);
  const Vector linear_start = 1.0 * demo.kde_a.values + 0.0 * demo.kde_b.values;
  demo.endpoint_error = std::max((start.positions - demo.a.positions).cwiseAbs().maxCoeff(),
                                 (linear_start - demo.kde_a.values).cwiseAbs().maxCoeff());
  demo.pass = demo.displacement_modes == 1 && demo.linear_modes == 2 && demo.endpoint_error == 0.0;
  return demo;
}

bool demo_figures(const std::filesystem::path& outdir, std::ostream& out) {
  std::filesystem::create_directories(outdir);
  const DiscriminationDemo bumps = bump_discrimination();
  write_table(outdir / "fig1_table.csv", bumps);
  write_densities(outdir / "fig1_densities.csv", {"rho_star", "rho_t1", "rho_t2"},
                  {&bumps.reference, &bumps.candidates[0], &bumps.candidates[1]});

  const DiscriminationDemo steps = step_discrimination();
  write_table(outdir / "fig2_table.csv", steps);
  write_densities(outdir / "fig2_densities.csv", {"rho_star", "coarse", "fine"},
                  {&steps.reference, &steps.candidates[0], &steps.candidates[1]});
  {
    // Quantile samples: the monotone matching behind each W2 value.
    std::ofstream q(outdir / "fig2_quantiles.csv");
    q.precision(17);
    q << "q,rho_star,coarse,fine\n";
    for (int i = 0; i < 256; ++i) {
      const double lvl = (i + 0.5) / 256.0;
      q << lvl << ',' << grid_quantile_1d(steps.reference, lvl) << ',' << grid_quantile_1d(steps.candidates[0], lvl)
        << ',' << grid_quantile_1d(steps.candidates[1], lvl) << '\n';
    }
  }

  const InterpolationDemo interp = gaussian_interpolation();
  write_densities(outdir / "fig4_curves.csv", {"rho_a", "rho_b", "w2_midpoint", "l2_midpoint"},
                  {&interp.kde_a, &interp.kde_b, &interp.displacement_mid, &interp.linear_mid});

  out.precision(12);
  out << "fig1 " << (bumps.pass ? "PASS" : "FAIL") << " l2_spread=" << bumps.l2_spread
      << " w2_far=" << bumps.rows[0].w2 << " w2_near=" << bumps.rows[1].w2 << '\n';
  out << "fig2 " << (steps.pass ? "PASS" : "FAIL") << " l2_spread=" << steps.l2_spread
      << " w2_coarse=" << steps.rows[0].w2 << " w2_fine=" << steps.rows[1].w2 << '\n';
  out << "fig4 " << (interp.pass ? "PASS" : "FAIL") << " w2_modes=" << interp.displacement_modes
      << " l2_modes=" << interp.linear_modes << " mid_mean=" << interp.mid_mean << " mid_sd=" << interp.mid_sd << '\n';
  return bumps.pass && steps.pass && interp.pass;
}

}  // namespace dissflow
