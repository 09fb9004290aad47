#include <doctest.h>

#include "dissflow/flows.hpp"
#include "dissflow/monitor.hpp"
#include "helpers.hpp"

using namespace dissflow;

namespace {

VelocityField constant_field(std::vector<double> c) {
  return VelocityField{[c](const ParticleEnsemble& rho, double) {
                         Points v(rho.size(), rho.dim());
                         for (Eigen::Index i = 0; i < rho.size(); ++i)
                           for (int k = 0; k < rho.dim(); ++k) v(i, k) = c[k];
                         return v;
                       },
                       "constant"};
}

Probes point_probes(int dim, double modulus = 1.0) {
  Probes p;
  p.target = TargetSet{PointSet{Points::Zero(1, dim)}};
  p.lyapunov = FunctionalSpec{quadratic_potential(std::vector<double>(dim, 0.0), modulus)};
  return p;
}

}  // namespace

TEST_CASE("disturbance signals") {
  CHECK(DisturbanceSignal::constant(0.3).sup_norm() == 0.3);
  auto s = DisturbanceSignal::sinusoid(0.2, 2.0, 0.5);
  CHECK(s.sup_norm() == doctest::Approx(0.7));
  CHECK(s.at(0.5) == doctest::Approx(0.7));
  auto p = DisturbanceSignal::piecewise({1.0, 2.0}, {0.1, 0.4, 0.2});
  CHECK(p.at(0.5) == 0.1);
  CHECK(p.at(1.5) == 0.4);
  CHECK(p.at(5.0) == 0.2);
  CHECK(p.sup_norm() == 0.4);
  CHECK(DisturbanceSignal::decaying(0.5, 1.0).sup_norm() == 0.5);
  CHECK(DisturbanceSignal::decaying(0.5, 1.0).at(1.0) == doctest::Approx(0.5 * std::exp(-1.0)));
  CHECK_THROWS_AS(DisturbanceSignal::sinusoid(1.0, 1.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(DisturbanceSignal::constant(-1.0), InvalidArgument);
  CHECK_THROWS_AS(DisturbanceSignal::piecewise({1.0}, {0.1}), InvalidArgument);

  std::mt19937_64 g(3);
  std::vector<DisturbanceSignal> all{s, p, DisturbanceSignal::decaying(0.5, 1.0), DisturbanceSignal::constant(0.2)};
  for (const auto& sig : all)
    for (int i = 0; i < 20; ++i) {
      double shift = std::uniform_real_distribution<double>(0.0, 5.0)(g);
      CHECK(sig.shifted(shift).sup_norm() <= sig.sup_norm() + 1e-15);
      CHECK(sig.shifted(shift).at(0.3) == doctest::Approx(sig.at(0.3 + shift)));
    }
}

TEST_CASE("flow config validation") {
  FlowConfig c;
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.dt = 0.1;
  c.log_every = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("zero drift leaves particles in place") {
  std::mt19937_64 g(1);
  auto e = testing::random_ensemble(BoxDomain::cube(2, -1.0, 1.0), 30, g);
  FlowConfig c;
  c.dt = 0.01;
  c.t_end = 1.0;
  auto r = integrate(e, constant_field({0.0, 0.0}), PerturbationField::none(), DisturbanceSignal::constant(0.0), c);
  CHECK((r.final_state.positions - e.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.final_state.size() == e.size());
}

TEST_CASE("linear drift decays exponentially; Heun is more accurate") {
  FunctionalSpec f{quadratic_potential({0.0})};
  auto drift = gradient_field(f);
  auto e = testing::line({1.0});
  double exact = std::exp(-1.0);
  FlowConfig c;
  c.dt = 0.1;
  c.t_end = 1.0;
  auto euler = integrate(e, drift, PerturbationField::none(), DisturbanceSignal::constant(0.0), c);
  c.integrator = Integrator::heun;
  auto heun = integrate(e, drift, PerturbationField::none(), DisturbanceSignal::constant(0.0), c);
  double err_e = std::abs(euler.final_state.positions(0, 0) - exact);
  double err_h = std::abs(heun.final_state.positions(0, 0) - exact);
  CHECK(err_e < c.dt);
  CHECK(err_h < err_e / 10.0);
}

TEST_CASE("unperturbed quadratic flow: Lyapunov decreases and the decay inequality holds") {
  std::mt19937_64 g(2);
  auto e = testing::random_ensemble(BoxDomain::cube(2, -1.0, 1.0), 200, g);
  FunctionalSpec f{quadratic_potential({0.0, 0.0})};
  FlowConfig c;
  c.dt = 1e-3;
  c.t_end = 3.0;
  c.log_every = 20;
  auto r = integrate(e, gradient_field(f), PerturbationField::none(), DisturbanceSignal::constant(0.0), c,
                     point_probes(2));
  for (std::size_t k = 1; k < r.log.size(); ++k) CHECK(r.log.lyapunov[k] <= r.log.lyapunov[k - 1]);
  auto rep = check_decay_condition(r.log, 1.0);
  CHECK(rep.fraction >= 0.99);
  CHECK(r.log.w2_to_target.back() == doctest::Approx(r.log.w2_to_target.front() * std::exp(-3.0)).epsilon(0.01));
}

TEST_CASE("additive constant disturbance settles at u0 |c|") {
  std::mt19937_64 g(4);
  auto e = testing::random_ensemble(BoxDomain::cube(2, -1.0, 1.0), 100, g);
  FunctionalSpec f{quadratic_potential({0.0, 0.0})};
  auto pert = PerturbationField::additive_field(constant_field({1.0, 0.5}));
  auto u = DisturbanceSignal::constant(0.2);
  FlowConfig c;
  c.dt = 1e-2;
  c.t_end = 15.0;
  auto r = integrate(e, make_perturbed_gradient_flow(f, pert, u), pert, u, c, point_probes(2));
  CHECK(r.log.w2_to_target.back() == doctest::Approx(0.2 * std::sqrt(1.25)).epsilon(0.02));
  CHECK(r.log.pert_norm.back() == doctest::Approx(0.04 * 1.25).epsilon(1e-12));
  CHECK(check_decay_condition(r.log, 1.0).fraction >= 0.99);
}

TEST_CASE("perturbation norms") {
  auto e = testing::line({0.1, 0.2, -0.3});
  CHECK(perturbation_norm(PerturbationField::none(), e, 0.0, DisturbanceSignal::constant(1.0)) == 0.0);
  auto add = PerturbationField::additive_field(constant_field({1.0}));
  CHECK(perturbation_norm(add, e, 0.0, DisturbanceSignal::constant(0.3)) == doctest::Approx(0.09));

  // KDE of N(0, s^2) samples has Fisher information near 1 / (s^2 + h^2).
  const double s = 0.3, h = 0.05, u = 0.1;
  GridLayout grid = GridLayout::uniform(BoxDomain::cube(1, -2.0, 2.0), 400);
  std::vector<double> m{0.0};
  auto sample = sample_density(gaussian_density(grid, m, s), 10000, 5);
  KernelSpec k{KernelFamily::gaussian, h, 1};
  auto diff = PerturbationField::isotropic_diffusion(kde_surrogate(k, grid));
  double norm = perturbation_norm(diff, sample, 0.0, DisturbanceSignal::constant(u));
  CHECK(norm == doctest::Approx(u * u / (s * s + h * h)).epsilon(0.1));
}

TEST_CASE("entropic regularization shrinks with epsilon at the target") {
  std::mt19937_64 g(6);
  auto target = testing::random_ensemble(BoxDomain::cube(2, 0.0, 1.0), 60, g);
  auto pert = PerturbationField::entropic_regularization(OtToTarget{TargetSet{target}});
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.05, 0.02, 0.005}) {
    double n = perturbation_norm(pert, target, 0.0, DisturbanceSignal::constant(eps));
    CHECK(n < prev);
    prev = n;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("stationary Ornstein-Uhlenbeck variance") {
  const double u = 0.05;
  auto e = sample_uniform(BoxDomain::cube(1, -2.0, 2.0), 10000, 7);
  e.positions *= 0.5;
  FunctionalSpec f{quadratic_potential({0.0})};
  FlowConfig c;
  c.dt = 1e-2;
  c.t_end = 10.0;
  c.log_every = 100;
  Probes p = point_probes(1);
  p.log_perturbation_norm = false;
  auto r = integrate(e, gradient_field(f), PerturbationField::isotropic_diffusion(), DisturbanceSignal::constant(u), c, p);
  double var = r.final_state.positions.col(0).squaredNorm() / 10000.0;
  CHECK(var == doctest::Approx(u).epsilon(0.15));
}

TEST_CASE("diffusion runs replay bit for bit") {
  auto e = sample_uniform(BoxDomain::cube(2, -1.0, 1.0), 300, 8);
  FunctionalSpec f{quadratic_potential({0.0, 0.0})};
  FlowConfig c;
  c.dt = 1e-2;
  c.t_end = 1.0;
  Probes p = point_probes(2);
  p.log_perturbation_norm = false;
  auto run = [&](std::uint64_t seed) {
    c.seed = seed;
    return integrate(e, gradient_field(f), PerturbationField::isotropic_diffusion(), DisturbanceSignal::constant(0.1),
                     c, p);
  };
  auto a = run(1), b = run(1), d = run(2);
  CHECK((a.final_state.positions.array() == b.final_state.positions.array()).all());
  CHECK(a.log.w2_to_target == b.log.w2_to_target);
  CHECK_FALSE((a.final_state.positions.array() == d.final_state.positions.array()).all());
  a.final_state.check_inside();
}

TEST_CASE("numerical failures are reported") {
  auto e = testing::line({0.0, 0.5}, -1.0, 1.0);
  FlowConfig c;
  c.dt = 0.1;
  c.t_end = 1.0;
  auto nan_field = constant_field({std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(integrate(e, nan_field, PerturbationField::none(), DisturbanceSignal::constant(0.0), c),
                  NumericalError);
  CHECK_THROWS_AS(integrate(e, constant_field({1e6}), PerturbationField::none(), DisturbanceSignal::constant(0.0), c),
                  NumericalError);
}

TEST_CASE("large steps relative to the Lipschitz constant are warned about") {
  auto e = testing::line({0.5}, -1.0, 1.0);
  FunctionalSpec f{quadratic_potential({0.0})};
  FlowConfig c;
  c.dt = 0.9;
  c.t_end = 1.8;
  c.lipschitz = 1.0;
  auto r = integrate(e, gradient_field(f), PerturbationField::none(), DisturbanceSignal::constant(0.0), c);
  CHECK_FALSE(r.log.warnings.empty());
}
