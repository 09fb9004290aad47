#include <doctest.h>

#include <sstream>

#include "dissflow/monitor.hpp"
#include "helpers.hpp"

using namespace dissflow;

namespace {

TrajectoryLog synthetic(double w0, double level, double t_end = 12.0, double dt = 0.05) {
  TrajectoryLog log;
  for (double t = 0.0; t <= t_end + 1e-12; t += dt) {
    double w = w0 * std::exp(-t) + level;
    log.append(t, w, 0.5 * w * w, level * level, level);
  }
  return log;
}

}  // namespace

TEST_CASE("isotonic regression pools adjacent violators") {
  auto r = isotonic_increasing({1.0, 3.0, 2.0, 4.0});
  CHECK(r == std::vector<double>{1.0, 2.5, 2.5, 4.0});
  auto flat = isotonic_increasing({3.0, 2.0, 1.0});
  for (double v : flat) CHECK(v == doctest::Approx(2.0));
  auto sorted = isotonic_increasing({0.1, 0.2, 0.3});
  CHECK(sorted == std::vector<double>{0.1, 0.2, 0.3});
}

TEST_CASE("envelope recovers rate and linear gain from synthetic runs") {
  EnvelopeOptions o;
  o.gamma = GammaTemplate::linear;
  auto env = fit_envelope({synthetic(1.0, 0.1), synthetic(1.0, 0.2)}, o);
  CHECK(env.valid);
  CHECK(env.lambda == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(env.gain == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(env.domination >= 0.99);
  CHECK(env.gamma(0.0) == 0.0);

  TrajectoryLog log = synthetic(1.0, 0.1);
  apply_envelope(log, env);
  for (std::size_t k = 0; k < log.size(); ++k) CHECK(log.w2_to_target[k] <= log.bound[k] * (1.0 + env.slack));
}

TEST_CASE("power-law gain exponent") {
  std::vector<TrajectoryLog> logs;
  for (double u : {0.01, 0.04, 0.16}) {
    TrajectoryLog log;
    for (double t = 0.0; t <= 12.0; t += 0.05) {
      double w = std::exp(-t) + std::sqrt(u);
      log.append(t, w, 0.5 * w * w, u, u);
    }
    logs.push_back(log);
  }
  auto env = fit_envelope(logs);
  CHECK(env.exponent == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(env.gain == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("decreasing plateaus are rejected") {
  EnvelopeOptions o;
  o.gamma = GammaTemplate::linear;
  TrajectoryLog hi = synthetic(1.0, 0.3);
  for (double& u : hi.u) u = 0.1;
  TrajectoryLog lo = synthetic(1.0, 0.05);
  for (double& u : lo.u) u = 0.2;
  auto env = fit_envelope({hi, lo}, o);
  CHECK_FALSE(env.monotone);
  CHECK_FALSE(env.valid);
  CHECK_FALSE(env.diagnostics.empty());
  CHECK_THROWS_AS(fit_envelope({synthetic(1.0, 0.1)}), InvalidArgument);
}

TEST_CASE("decay check rejects a growing trajectory") {
  TrajectoryLog log;
  for (int k = 0; k < 50; ++k) {
    double t = 0.1 * k;
    double w = 0.1 * std::exp(0.5 * t);
    log.append(t, w, 0.5 * w * w, 0.0, 0.0);
  }
  auto r = check_decay_condition(log, 1.0);
  CHECK_FALSE(r.pass);
  CHECK(r.fraction < 0.01);

  TrajectoryLog still;
  for (int k = 0; k < 10; ++k) still.append(0.1 * k, 0.0, 0.0, 0.0, 0.0);
  CHECK(check_decay_condition(still, 1.0).pass);

  TrajectoryLog tiny;
  tiny.append(0.0, 1.0, 0.5, 0.0, 0.0);
  tiny.append(0.1, 0.9, 0.4, 0.0, 0.0);
  CHECK_THROWS_AS(check_decay_condition(tiny, 1.0), InvalidArgument);
}

TEST_CASE("Markov check") {
  EnvelopeOptions o;
  o.gamma = GammaTemplate::linear;
  auto env = fit_envelope({synthetic(1.0, 0.1), synthetic(1.0, 0.2)}, o);
  const Eigen::Index n = 1000;
  DistanceSamples good;
  good.w0 = 1.1;
  good.level = 0.1;
  DistanceSamples bad = good;
  for (int k = 0; k < 5; ++k) {
    double t = 2.0 * k;
    double w = std::exp(-t) + 0.1;
    good.times.push_back(t);
    bad.times.push_back(t);
    // Every particle at exactly the mean distance: never beyond bound / sqrt(eps).
    good.squared_distances.push_back(Vector::Constant(n, w * w));
    // Half the particles far away.
    Vector far = Vector::Constant(n, w * w);
    far.head(n / 2).setConstant(1e4);
    bad.squared_distances.push_back(far);
  }
  CHECK(markov_nss_check(good, env, {0.05, 0.1, 1.0}).pass);
  auto rb = markov_nss_check(bad, env, {0.05, 0.1});
  CHECK_FALSE(rb.pass);
  CHECK(markov_nss_check(bad, env, {1.0}).pass);
  CHECK(rb.rows[0].worst_exceedance <= rb.rows[1].worst_exceedance);
  CHECK_THROWS_AS(markov_nss_check(good, env, {0.01}), InvalidArgument);
}

TEST_CASE("positivity sandwich") {
  TrajectoryLog log = synthetic(1.0, 0.1);
  PowerLaw half{0.5, 2.0};
  auto r = check_positivity_bounds(log, half, half);
  CHECK(r.pass);
  CHECK(r.tightest_lower == doctest::Approx(0.5));
  CHECK(r.tightest_upper == doctest::Approx(0.5));

  TrajectoryLog zero = log;
  for (double& v : zero.lyapunov) v = 0.0;
  auto z = check_positivity_bounds(zero, half, half);
  CHECK_FALSE(z.lower_ok);
  CHECK(z.witness == 0);
  CHECK_THROWS_AS((PowerLaw{0.5, 0.5}.validate()), InvalidArgument);
}

TEST_CASE("invariant level") {
  PowerLaw half{0.5, 2.0};
  // chi(r) = r^2 / 2 at lambda = 1; gamma = 0.5 * 0.02 = 0.01 -> r = sqrt(0.02).
  CHECK(invariant_level(half, 1.0, 0.5, 0.02) == doctest::Approx(0.01));

  TrajectoryLog log = synthetic(1.0, 0.1);
  auto ok = check_invariant_level(log, 0.1);
  CHECK(ok.entered);
  CHECK(ok.pass);
  TrajectoryLog spike = log;
  spike.lyapunov.back() = 1.0;
  auto bad = check_invariant_level(spike, 0.1);
  CHECK(bad.violations == 1);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("trajectory CSV round trip and verdict lines") {
  TrajectoryLog log = synthetic(1.0, 0.1, 1.0, 0.25);
  log.seed = 42;
  log.config_hash = "abc";
  std::stringstream s;
  write_trajectory_csv(s, log);
  TrajectoryLog r = read_trajectory_csv(s);
  CHECK(r.seed == 42);
  CHECK(r.config_hash == "abc");
  REQUIRE(r.size() == log.size());
  for (std::size_t k = 0; k < log.size(); ++k) CHECK(r.w2_to_target[k] == doctest::Approx(log.w2_to_target[k]));

  Verdict v{"decay", true, {{"fraction", 1.0}}, {}};
  CHECK(v.line().rfind("decay PASS", 0) == 0);
  CHECK(v.line().find("fraction=1") != std::string::npos);

  TrajectoryLog broken = log;
  broken.times[1] = broken.times[0];
  CHECK_THROWS_AS(broken.validate(), InvalidArgument);
}
