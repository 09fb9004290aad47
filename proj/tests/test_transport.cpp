#include <doctest.h>

#include <algorithm>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "dissflow/transport.hpp"
#include "helpers.hpp"

using namespace dissflow;

namespace {

double brute_force_w2sq(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  std::vector<int> p(a.size());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) c += (a.positions.row(i) - b.positions.row(p[i])).squaredNorm();
    best = std::min(best, c / static_cast<double>(a.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

ParticleEnsemble normal_quantiles(double mean, Eigen::Index n) {
  boost::math::normal_distribution<> nd(mean, 1.0);
  Points p(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) p(i, 0) = boost::math::quantile(nd, (i + 0.5) / static_cast<double>(n));
  return {BoxDomain::cube(1, -20.0, 20.0), p};
}

}  // namespace

TEST_CASE("1D exact distances on simple configurations") {
  CHECK(w2_exact_1d(testing::line({0.0}), testing::line({1.0})).distance == doctest::Approx(1.0));
  auto a = testing::line({0.3, -1.0, 2.0});
  CHECK(w2_exact_1d(a, a).distance == 0.0);
}

TEST_CASE("1D W2 between shifted Gaussians matches the quantile integral") {
  // Reference: int_0^1 (Q_a - Q_b)^2 dq for N(0,1), N(2,1) is 4.
  auto a = normal_quantiles(0.0, 100000);
  auto b = normal_quantiles(2.0, 100000);
  CHECK(w2_exact_1d(a, b).distance == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("assignment with one particle is the squared distance") {
  ParticleEnsemble a(BoxDomain::cube(2, -5.0, 5.0), Points{{0.0, 0.0}});
  ParticleEnsemble b(BoxDomain::cube(2, -5.0, 5.0), Points{{3.0, 4.0}});
  auto r = w2_assignment(a, b);
  CHECK(r.plan.cost == doctest::Approx(25.0));
  CHECK(r.distance == doctest::Approx(5.0));
}

TEST_CASE("assignment agrees with brute-force enumeration") {
  std::mt19937_64 g(101);
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Index n = 1 + static_cast<Eigen::Index>(g() % 6);
    auto a = testing::random_ensemble(dom, n, g);
    auto b = testing::random_ensemble(dom, n, g);
    auto r = w2_assignment(a, b);
    CHECK(r.plan.cost == doctest::Approx(brute_force_w2sq(a, b)).epsilon(1e-12));
    std::vector<Eigen::Index> perm = r.plan.permutation;
    std::sort(perm.begin(), perm.end());
    for (Eigen::Index i = 0; i < n; ++i) CHECK(perm[i] == i);
  }
}

TEST_CASE("assignment and sorting agree in 1D") {
  std::mt19937_64 g(7);
  BoxDomain dom = BoxDomain::cube(1, 0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = testing::random_ensemble(dom, 40, g);
    auto b = testing::random_ensemble(dom, 40, g);
    CHECK(w2_assignment(a, b).plan.cost == doctest::Approx(w2_exact_1d(a, b).plan.cost).epsilon(1e-10));
  }
}

TEST_CASE("assignment cap is enforced") {
  std::mt19937_64 g(1);
  BoxDomain dom = BoxDomain::cube(2, 0.0, 1.0);
  auto a = testing::random_ensemble(dom, 20, g);
  auto b = testing::random_ensemble(dom, 20, g);
  CHECK_THROWS_AS(w2_assignment(a, b, 10), InvalidArgument);
}

TEST_CASE("exact W2 is a metric on small ensembles") {
  std::mt19937_64 g(33);
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = testing::random_ensemble(dom, 5, g);
    auto b = testing::random_ensemble(dom, 5, g);
    auto c = testing::random_ensemble(dom, 5, g);
    double ab = w2_exact(a, b).distance, ba = w2_exact(b, a).distance;
    double bc = w2_exact(b, c).distance, ac = w2_exact(a, c).distance;
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ac <= ab + bc + 1e-12);
    CHECK(w2_exact(a, a).distance <= 1e-12);
  }
}

TEST_CASE("displacement interpolation is a constant-speed geodesic") {
  std::mt19937_64 g(55);
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = testing::random_ensemble(dom, 8, g);
    auto b = testing::random_ensemble(dom, 8, g);
    double d = w2_exact(a, b).distance;
    double t = std::uniform_real_distribution<double>(0.0, 1.0)(g);
    auto mid = displacement_interpolate(a, b, t);
    CHECK(w2_exact(a, mid).distance == doctest::Approx(t * d).epsilon(1e-8));
    CHECK(w2_exact(mid, b).distance == doctest::Approx((1.0 - t) * d).epsilon(1e-8));
  }
  auto a = testing::random_ensemble(dom, 8, g);
  auto b = testing::random_ensemble(dom, 8, g);
  CHECK(w2_exact(displacement_interpolate(a, b, 0.0), a).distance < 1e-12);
  CHECK(w2_exact(displacement_interpolate(a, b, 1.0), b).distance < 1e-12);
}

TEST_CASE("midpoint of symmetric Gaussians stays unimodal at the origin") {
  auto a = normal_quantiles(-3.0, 2000);
  auto b = normal_quantiles(3.0, 2000);
  auto mid = displacement_interpolate(a, b, 0.5);
  Vector x = mid.positions.col(0);
  double mean = x.mean();
  double sd = std::sqrt((x.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-9);
  CHECK(sd == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("L2 distance between grid densities") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 4);
  GridDensity a(grid, Vector{{4.0, 0.0, 0.0, 0.0}});
  GridDensity b(grid, Vector{{0.0, 0.0, 2.0, 2.0}});
  CHECK(l2_density_distance(a, a) == 0.0);
  // Direct sum of squared differences times cell width.
  CHECK(l2_density_distance(a, b) == doctest::Approx(std::sqrt((16.0 + 4.0 + 4.0) * 0.25)));
  GridDensity c(GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 5), Vector::Ones(5));
  CHECK_THROWS_AS(l2_density_distance(a, c), InvalidArgument);
}

TEST_CASE("1D grid W2 of two indicator blocks is the shift") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 10);
  Vector va = Vector::Zero(10), vb = Vector::Zero(10);
  va.segment(0, 2).setConstant(5.0);
  vb.segment(6, 2).setConstant(5.0);
  CHECK(w2_grid_1d(GridDensity(grid, va), GridDensity(grid, vb)) == doctest::Approx(0.6).epsilon(1e-10));
}

TEST_CASE("distance to target sets") {
  PointSet origin{Points{{0.0}}};
  auto at0 = testing::line({0.0, 0.0});
  auto r = w2_to_target_set(at0, origin);
  CHECK(r.value == 0.0);
  CHECK(r.method == "closed-form-point-set");
  auto u = sample_uniform(BoxDomain::cube(1, 0.0, 1.0), 100000, 8);
  CHECK(w2_to_target_set(u, origin).value == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(0.01));
  auto e = testing::line({0.1, 0.4, 0.9});
  CHECK(w2_to_target_set(e, TargetSet{e}).value < 1e-12);
}
