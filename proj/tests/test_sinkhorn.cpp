#include <doctest.h>

#include "dissflow/sinkhorn.hpp"
#include "dissflow/transport.hpp"
#include "helpers.hpp"

using namespace dissflow;

namespace {

DiscreteMeasure cloud(const BoxDomain& dom, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  return DiscreteMeasure::from_ensemble(testing::random_ensemble(dom, n, g));
}

}  // namespace

TEST_CASE("large epsilon gives the product coupling") {
  auto a = cloud(BoxDomain::cube(2, 0.0, 1.0), 30, 1);
  auto b = cloud(BoxDomain::cube(2, 0.0, 1.0), 25, 2);
  SinkhornOptions o;
  o.epsilon = 1e4;
  o.scaling_start = 1.0;
  auto p = sinkhorn(a, b, o);
  REQUIRE(p.converged);
  double mean_cost = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j)
      mean_cost += a.weights[i] * b.weights[j] * (a.support.row(i) - b.support.row(j)).squaredNorm();
  CHECK(p.primal_cost == doctest::Approx(mean_cost).epsilon(1e-3));
}

TEST_CASE("dense plan marginals match the inputs") {
  auto a = cloud(BoxDomain::cube(2, 0.0, 1.0), 40, 3);
  auto b = cloud(BoxDomain::cube(2, 0.0, 1.0), 30, 4);
  SinkhornOptions o;
  o.epsilon = 0.01;
  o.tol = 1e-9;
  auto p = sinkhorn(a, b, o);
  REQUIRE(p.converged);
  auto plan = dense_plan(a, b, p);
  // The point-cloud kernel is stored in single precision.
  CHECK((plan.coupling.rowwise().sum() - a.weights).cwiseAbs().sum() < 1e-6);
  CHECK((plan.coupling.colwise().sum().transpose() - b.weights).cwiseAbs().sum() < 1e-6);
}

TEST_CASE("regularized cost dominates the exact cost and grows with epsilon") {
  std::mt19937_64 g(12);
  BoxDomain dom = BoxDomain::cube(2, 0.0, 1.0);
  auto ea = testing::random_ensemble(dom, 40, g);
  auto eb = testing::random_ensemble(dom, 40, g);
  double exact = w2_assignment(ea, eb).plan.cost;
  auto a = DiscreteMeasure::from_ensemble(ea), b = DiscreteMeasure::from_ensemble(eb);
  double prev = 0.0;
  for (double eps : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
    SinkhornOptions o;
    o.epsilon = eps;
    // Attainable marginal accuracy of the single-precision kernel at small eps.
    o.tol = 1e-5;
    auto p = sinkhorn(a, b, o);
    REQUIRE(p.converged);
    CHECK(p.regularized_cost >= exact - 1e-6);
    CHECK(p.primal_cost >= exact - 1e-6);
    CHECK(p.regularized_cost >= prev - 1e-6);
    prev = p.regularized_cost;
  }
}

TEST_CASE("divergence of a measure with itself vanishes") {
  auto a = cloud(BoxDomain::cube(2, 0.0, 1.0), 50, 5);
  SinkhornOptions o;
  o.epsilon = 0.01;
  CHECK(std::abs(sinkhorn_divergence(a, a, o).divergence) < 1e-8);
}

TEST_CASE("debiased divergence of shifted 1D Gaussians is the squared shift") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, -2.5, 3.5), 1200);
  std::vector<double> m0{0.0}, m1{1.0};
  auto a = DiscreteMeasure::from_grid(gaussian_density(grid, m0, 0.5));
  auto b = DiscreteMeasure::from_grid(gaussian_density(grid, m1, 0.5));
  SinkhornOptions o;
  o.epsilon = 0.01 * 0.25;
  o.tol = 1e-8;
  auto d = sinkhorn_divergence(a, b, o);
  CHECK(d.ab.converged);
  CHECK(d.divergence == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("velocity between a measure and itself is small") {
  std::mt19937_64 g(9);
  BoxDomain dom = BoxDomain::cube(2, 0.0, 1.0);
  auto e = testing::random_ensemble(dom, 200, g);
  auto m = DiscreteMeasure::from_ensemble(e);
  for (double eps : {1e-2, 4e-3, 1e-3}) {
    SinkhornOptions o;
    o.epsilon = eps;
    auto p = sinkhorn(m, m, o);
    Points v = sinkhorn_velocity(e.positions, p, m);
    CHECK(v.rowwise().norm().maxCoeff() < 10.0 * std::sqrt(eps) * dom.diameter());
  }
}

TEST_CASE("velocity towards a single target point") {
  auto e = testing::line({0.0});
  auto t = DiscreteMeasure::from_ensemble(testing::line({1.0}));
  auto s = DiscreteMeasure::from_ensemble(e);
  SinkhornOptions o;
  o.epsilon = 1e-3;
  auto p = sinkhorn(s, t, o);
  Points v = sinkhorn_velocity(e.positions, p, t);
  CHECK(v(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("barycentric projection of a translated Gaussian is the translation") {
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 500);
  std::vector<double> m0{0.35}, m1{0.55};
  auto a = DiscreteMeasure::from_grid(gaussian_density(grid, m0, 0.08));
  auto b = DiscreteMeasure::from_grid(gaussian_density(grid, m1, 0.08));
  SinkhornOptions o;
  o.epsilon = 1e-4;
  o.tol = 1e-8;
  auto p = sinkhorn(a, b, o);
  REQUIRE(p.converged);
  Points t = grid_barycentric_projection(a, p, b);
  Points c = grid.centers();
  double wmax = a.weights.maxCoeff();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    if (a.weights[i] < 1e-2 * wmax) continue;
    CHECK(std::abs(t(i, 0) - c(i, 0) - 0.2) < 0.05 * 0.2);
  }
}

TEST_CASE("iteration budget and underflow are reported") {
  auto a = cloud(BoxDomain::cube(2, 0.0, 1.0), 30, 6);
  auto b = cloud(BoxDomain::cube(2, 0.0, 1.0), 30, 7);
  SinkhornOptions o;
  o.epsilon = 1e-3;
  o.max_iter = 3;
  o.tol = 1e-12;
  auto p = sinkhorn(a, b, o);
  CHECK_FALSE(p.converged);
  CHECK_THROWS_AS(require_converged(p, "test"), NumericalError);

  SinkhornOptions plain;
  plain.epsilon = 1e-4;
  plain.log_domain = false;
  auto far = DiscreteMeasure::from_ensemble(testing::line({0.0, 0.1}));
  auto farb = DiscreteMeasure::from_ensemble(testing::line({5.0, 5.1}));
  CHECK_THROWS_AS(sinkhorn(far, farb, plain), NumericalError);
}

TEST_CASE("stale potentials are refused") {
  std::mt19937_64 g(10);
  BoxDomain dom = BoxDomain::cube(2, 0.0, 1.0);
  auto e = testing::random_ensemble(dom, 60, g);
  auto t = cloud(dom, 60, 11);
  SinkhornOptions o;
  o.epsilon = 1e-2;
  auto p = sinkhorn(DiscreteMeasure::from_ensemble(e), t, o);
  CHECK_NOTHROW(sinkhorn_velocity(e.positions, p, t));
  Points moved = e.positions.array() + 0.3;
  CHECK_THROWS_AS(sinkhorn_velocity(moved, p, t), NumericalError);
}
