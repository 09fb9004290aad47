#include <doctest.h>

#include "dissflow/functionals.hpp"
#include "helpers.hpp"

using namespace dissflow;

namespace {

PotentialEnergy cosine_potential() {
  PotentialEnergy v;
  v.value = [](std::span<const double> x) {
    double s = 0.0;
    for (double xi : x) s += 1.0 - std::cos(xi);
    return s;
  };
  v.gradient = [](std::span<const double> x, std::span<double> g) {
    for (std::size_t k = 0; k < x.size(); ++k) g[k] = std::sin(x[k]);
  };
  v.lipschitz = 1.0;
  v.name = "cosine";
  return v;
}

std::vector<ParticleEnsemble> random_ensembles(const BoxDomain& dom, int count, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<ParticleEnsemble> out;
  for (int i = 0; i < count; ++i) out.push_back(testing::random_ensemble(dom, n, g));
  return out;
}

}  // namespace

TEST_CASE("potential energy values") {
  FunctionalSpec f{quadratic_potential({0.0})};
  CHECK(eval_functional(f, testing::line({0.0, 0.0})) == 0.0);
  auto u = sample_uniform(BoxDomain::cube(1, 0.0, 1.0), 100000, 3);
  CHECK(eval_functional(f, u) == doctest::Approx(1.0 / 6.0).epsilon(0.01));
}

TEST_CASE("quadratic potential velocity is -x") {
  FunctionalSpec f{quadratic_potential({0.0, 0.0})};
  std::mt19937_64 g(2);
  auto e = testing::random_ensemble(BoxDomain::cube(2, -1.0, 1.0), 20, g);
  Points v = gradient_velocities(f, e);
  CHECK((v + e.positions).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("OT functional vanishes at its target") {
  auto e = testing::line({0.1, 0.5, 0.8});
  FunctionalSpec f{OtToTarget{TargetSet{e}}};
  CHECK(eval_functional(f, e) < 1e-14);
  CHECK(gradient_velocities(f, e).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("entropy velocity for an oracle Gaussian surrogate is x / sigma^2") {
  const double sigma = 0.5;
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, -3.0, 3.0), 600);
  Entropy h;
  h.surrogate = [grid, sigma](const ParticleEnsemble&) {
    std::vector<double> m{0.0};
    return gaussian_density(grid, m, sigma);
  };
  FunctionalSpec f{h};
  auto e = testing::line({-0.6, -0.3, 0.2, 0.7}, -3.0, 3.0);
  Points v = gradient_velocities(f, e);
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    double expect = e.positions(i, 0) / (sigma * sigma);
    CHECK(std::abs(v(i, 0) - expect) < 0.1 * std::abs(expect));
  }
}

TEST_CASE("quadratic growth modulus of the quadratic potential") {
  BoxDomain dom = BoxDomain::cube(1, -1.0, 1.0);
  auto samples = random_ensembles(dom, 100, 16, 4);
  PointSet origin{Points{{0.0}}};
  for (double m : {1.0, 2.0}) {
    FunctionalSpec f{quadratic_potential({0.0}, m), m, m};
    auto r = check_quadratic_growth(f, samples, TargetSet{origin});
    CHECK(r.modulus == doctest::Approx(m).epsilon(1e-6));
    CHECK(r.violations.empty());
  }
  FunctionalSpec f{quadratic_potential({0.0}), 1.0, 1.0};
  auto at_target = testing::line({0.0, 0.0}, -1.0, 1.0);
  auto r = check_quadratic_growth(f, {at_target}, TargetSet{origin});
  CHECK(r.skipped == 1);
}

TEST_CASE("gradient dominance of the quadratic potential") {
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  auto samples = random_ensembles(dom, 50, 10, 5);
  PointSet origin{Points{{0.0, 0.0}}};
  FunctionalSpec f{quadratic_potential({0.0, 0.0}, 1.5), 1.5, 1.5};
  auto r = check_gradient_dominance(f, samples, TargetSet{origin});
  for (const auto& row : r.rows) CHECK(row.ratio == doctest::Approx(1.5).epsilon(1e-10));
  auto at_target = ParticleEnsemble(dom, Points::Zero(3, 2));
  CHECK(check_gradient_dominance(f, {at_target}, TargetSet{origin}).skipped == 1);
}

TEST_CASE("smoothness ratio") {
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  std::mt19937_64 g(6);
  std::vector<std::pair<ParticleEnsemble, ParticleEnsemble>> pairs;
  for (int i = 0; i < 100; ++i) pairs.emplace_back(testing::random_ensemble(dom, 6, g), testing::random_ensemble(dom, 6, g));

  FunctionalSpec quad{quadratic_potential({0.0, 0.0}), 1.0, 1.0};
  auto r = check_l_smoothness(quad, pairs);
  for (const auto& row : r.rows) CHECK(row.ratio == doctest::Approx(1.0).epsilon(1e-9));

  // Hessian of the cosine potential is diag(cos x), bounded by one.
  FunctionalSpec cosine{cosine_potential(), std::nullopt, 1.0};
  auto rc = check_l_smoothness(cosine, pairs);
  CHECK(rc.modulus <= 1.0 + 1e-9);
  CHECK(rc.violations.empty());

  auto same = check_l_smoothness(quad, {{pairs[0].first, pairs[0].first}});
  CHECK(same.skipped == 1);
}

TEST_CASE("gradient matches finite differences of the functional") {
  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  std::mt19937_64 g(8);
  auto e = testing::random_ensemble(dom, 12, g);
  Points w = Points::Random(12, 2);
  auto check = [&](const FunctionalSpec& f) {
    const double h = 1e-6;
    ParticleEnsemble plus = e, minus = e;
    plus.positions += h * w;
    minus.positions -= h * w;
    double fd = (eval_functional(f, plus) - eval_functional(f, minus)) / (2.0 * h);
    Points v = gradient_velocities(f, e);
    double analytic = -(v.array() * w.array()).sum() / static_cast<double>(e.size());
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-4));
  };
  check(FunctionalSpec{cosine_potential()});
  check(FunctionalSpec{quadratic_potential({0.2, -0.1}, 2.0)});
  auto target = testing::random_ensemble(dom, 12, g);
  check(FunctionalSpec{OtToTarget{TargetSet{target}}});
}

TEST_CASE("gradient Lipschitz spot check") {
  auto v = quadratic_potential({0.0, 0.0}, 3.0);
  CHECK(spot_check_gradient_lipschitz(v, BoxDomain::cube(2, -1.0, 1.0), 200, 1) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(spot_check_gradient_lipschitz(cosine_potential(), BoxDomain::cube(2, -1.0, 1.0), 200, 1) <= 1.0 + 1e-9);
}

TEST_CASE("Fisher information") {
  GridLayout flat = GridLayout::uniform(BoxDomain::cube(1, 0.0, 1.0), 50);
  CHECK(fisher_information(uniform_density(flat)) == doctest::Approx(0.0).epsilon(1e-12));
  for (double s : {1.0, 0.5}) {
    GridLayout wide = GridLayout::uniform(BoxDomain::cube(1, -6.0 * s, 6.0 * s), 1200);
    std::vector<double> m{0.0};
    CHECK(fisher_information(gaussian_density(wide, m, s)) == doctest::Approx(1.0 / (s * s)).epsilon(0.02));
  }
  Vector holes = Vector::Ones(50);
  holes[10] = 0.0;
  GridDensity d(flat, holes);
  d.normalize();
  CHECK_THROWS_AS(fisher_information(d), NumericalError);
}

TEST_CASE("lifted proper loss") {
  ProperLoss loss;
  loss.value = [](std::span<const double> x) {
    double r2 = x[0] * x[0] + x[1] * x[1];
    return 0.5 * r2 * (1.0 + 0.5 * std::exp(-r2));
  };
  loss.gradient = [](std::span<const double> x, std::span<double> g) {
    double r2 = x[0] * x[0] + x[1] * x[1];
    double s = (1.0 + 0.5 * std::exp(-r2)) - 0.5 * r2 * std::exp(-r2);
    g[0] = s * x[0];
    g[1] = s * x[1];
  };
  loss.minimum = 0.0;
  loss.minimizers = PointSet{Points{{0.0, 0.0}}};

  BoxDomain dom = BoxDomain::cube(2, -1.0, 1.0);
  std::mt19937_64 g(12);
  auto pts = testing::random_ensemble(dom, 200, g).positions;
  auto rep = check_proper_loss(loss, pts);
  CHECK(rep.minimum_holds);
  CHECK(rep.growth >= 0.5 - 1e-12);
  CHECK(rep.gradient_size > 0.0);
  CHECK(std::isfinite(rep.local_lipschitz));

  FunctionalSpec f = lift_proper_loss(loss, 1.0);
  auto samples = random_ensembles(dom, 100, 8, 13);
  auto r = check_quadratic_growth(f, samples, TargetSet{loss.minimizers});
  CHECK(r.violations.empty());
  CHECK(r.modulus >= 1.0);
}
