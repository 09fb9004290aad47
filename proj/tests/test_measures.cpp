#include <doctest.h>

#include <sstream>

#include "dissflow/measures.hpp"
#include "helpers.hpp"

using namespace dissflow;

TEST_CASE("single-cell grid samples uniformly inside the cell") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 1);
  GridDensity d(grid, Vector::Ones(1));
  auto e = sample_density(d, 4, 7);
  CHECK(e.size() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(e.positions(i, 0) >= 0.0);
    CHECK(e.positions(i, 0) <= 1.0);
  }
}

TEST_CASE("all samples land in the positive-mass half") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 2);
  GridDensity d(grid, Vector{{2.0, 0.0}});
  auto e = sample_density(d, 1000, 3);
  CHECK(e.positions.col(0).maxCoeff() <= 0.5);
}

TEST_CASE("samples never fall in zero-mass cells") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(2, 0.0, 1.0), 8);
  std::mt19937_64 g(5);
  Vector v(grid.size());
  for (Eigen::Index c = 0; c < grid.size(); ++c) v[c] = (g() % 3 == 0) ? 0.0 : 1.0;
  GridDensity d(grid, v);
  d.normalize();
  auto e = sample_density(d, 2000, 11);
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    std::vector<double> x{e.positions(i, 0), e.positions(i, 1)};
    CHECK(v[grid.locate(x)] > 0.0);
  }
}

TEST_CASE("sample mean of a discretized Gaussian matches the grid mean") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, -5.0, 5.0), 400);
  std::vector<double> mu{0.7};
  GridDensity d = gaussian_density(grid, mu, 1.0);
  CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-10));
  // Direct midpoint sum as the reference mean.
  double ref = 0.0;
  for (Eigen::Index c = 0; c < grid.size(); ++c) ref += grid.axis_center(0, static_cast<int>(c)) * d.values[c];
  ref *= grid.cell_volume();
  auto e = sample_density(d, 100000, 21);
  double m = e.positions.col(0).mean();
  CHECK(std::abs(m - ref) < 3.0 * 1.0 / std::sqrt(1e5));
}

TEST_CASE("unnormalized targets are rejected") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 4);
  GridDensity d(grid, Vector::Constant(4, 3.0));
  CHECK_THROWS_AS(sample_density(d, 10, 1), InvalidArgument);
}

TEST_CASE("sampling is deterministic per seed") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(2, 0.0, 1.0), 16);
  GridDensity d = uniform_density(grid);
  auto a = sample_density(d, 100, 9);
  auto b = sample_density(d, 100, 9);
  auto c = sample_density(d, 100, 10);
  CHECK((a.positions.array() == b.positions.array()).all());
  CHECK_FALSE((a.positions.array() == c.positions.array()).all());
}

TEST_CASE("distance to a point set") {
  PointSet m{Points{{0.0, 0.0}, {2.0, 0.0}}};
  std::vector<double> x{1.0, 1.0}, y{2.0, 0.0};
  CHECK(dist_to_set(x, m) == doctest::Approx(std::sqrt(2.0)));
  CHECK(dist_to_set(y, m) == 0.0);
}

TEST_CASE("second moment about a set") {
  PointSet origin{Points{{0.0}}};
  auto at0 = testing::line({0.0, 0.0, 0.0});
  CHECK(second_moment_about_set(at0, origin) == 0.0);
  auto u = sample_uniform(BoxDomain::cube(1, 0.0, 1.0), 100000, 4);
  CHECK(second_moment_about_set(u, origin) == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  auto off = testing::line({0.0, 0.5});
  CHECK(second_moment_about_set(off, origin) > 0.0);
}

TEST_CASE("reflection keeps points in the box") {
  BoxDomain dom = BoxDomain::cube(2, 0.0, 1.0);
  std::vector<double> x{1.2, -0.3};
  dom.reflect(x);
  CHECK(x[0] == doctest::Approx(0.8));
  CHECK(x[1] == doctest::Approx(0.3));
}

TEST_CASE("grid layout ravel and locate round trip") {
  GridLayout grid(BoxDomain({0.0, -1.0}, {2.0, 1.0}), {4, 5});
  for (Eigen::Index f = 0; f < grid.size(); ++f) {
    std::vector<int> m(2);
    grid.unravel(f, m);
    CHECK(grid.ravel(m) == f);
    std::vector<double> c(2);
    grid.center(f, c);
    CHECK(grid.locate(c) == f);
  }
}

TEST_CASE("density and ensemble serialization round trip") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(2, -1.0, 1.0), 6);
  std::vector<double> mu{0.1, -0.2};
  GridDensity d = gaussian_density(grid, mu, 0.4);
  std::stringstream s;
  write_grid_density(s, d);
  GridDensity r = read_grid_density(s);
  CHECK(r.layout == d.layout);
  CHECK((r.values - d.values).cwiseAbs().maxCoeff() < 1e-12);

  auto e = sample_density(d, 50, 2);
  std::stringstream t;
  write_ensemble_csv(t, e);
  auto er = read_ensemble_csv(t, e.domain);
  CHECK((er.positions - e.positions).cwiseAbs().maxCoeff() < 1e-12);
}
