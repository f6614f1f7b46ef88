#include <cmath>
#include <numbers>

#include "doctest.h"
#include "epo/sampler/sampler.hpp"

using namespace epo;
using namespace epo::sampling;
using diff::Array;

namespace {

const flow::Schedule kLinear;

/// Exact velocity of the linear interpolant when the data are N(0, 1).
VelocityFn standard_normal_field() {
  return [](const Array& x, double t) {
    Array v = x;
    const double var = t * t + (1 - t) * (1 - t);
    for (double& e : v.data()) e *= (2 * t - 1) / var;
    return v;
  };
}

double log_marginal(double x, double t) {
  const double var = t * t + (1 - t) * (1 - t);
  return -0.5 * x * x / var - 0.5 * std::log(2 * std::numbers::pi * var);
}

VelocityFn point_mass_field(double mu) {
  return [mu](const Array& x, double t) {
    Array v = x;
    for (double& e : v.data()) e = (mu - e) / (1 - t);
    return v;
  };
}

struct Stats {
  double mean = 0, var = 0;
};

Stats stats(const Array& s) {
  Stats r;
  for (double v : s.data()) r.mean += v;
  r.mean /= static_cast<double>(s.size());
  for (double v : s.data()) r.var += (v - r.mean) * (v - r.mean);
  r.var /= static_cast<double>(s.size() - 1);
  return r;
}

SamplerConfig config(Method m, std::size_t steps, double w, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.method = m;
  c.steps = steps;
  c.score_norm = w;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS(config(Method::Sde, 1, 0.1).validate());
  CHECK_THROWS(config(Method::Sde, 10, -0.1).validate());
  auto c = config(Method::Sde, 10, 0.1);
  c.time_eps = 0.2;
  CHECK_THROWS(c.validate());
  CHECK(parse_method("ode") == Method::OdeHeun);
  CHECK(parse_method("ode-euler") == Method::OdeEuler);
  CHECK(parse_method(to_string(Method::Sde)) == Method::Sde);
  CHECK_THROWS(parse_method("rk4"));
}

TEST_CASE("score transform on the linear schedule") {
  for (double t : {0.1, 0.5, 0.9}) {
    const std::vector<double> v{0.7, -1.2}, x{0.3, 2.0};
    const auto s = score_from_velocity(v, x, t, kLinear);
    for (std::size_t i = 0; i < 2; ++i) CHECK(s[i] == doctest::Approx((t * v[i] - x[i]) / (1 - t)).epsilon(1e-14));
  }
  const std::vector<double> v{1.0}, x{0.0};
  CHECK_THROWS_AS(score_from_velocity(v, x, 1.0, kLinear), std::domain_error);
  CHECK_THROWS_AS(score_from_velocity(v, x, 1.0, flow::Schedule(flow::ScheduleKind::Trig)), std::domain_error);
}

TEST_CASE("score of the point-mass velocity is the Gaussian score") {
  const double mu = 0.8;
  Rng rng = make_stream(3, 0);
  for (int i = 0; i < 50; ++i) {
    const double t = uniform(rng, 0.01, 0.99), x = 2 * standard_normal(rng);
    const std::vector<double> xs{x}, vs{(mu - x) / (1 - t)};
    const double expected = -(x - t * mu) / ((1 - t) * (1 - t));
    CHECK(score_from_velocity(vs, xs, t, kLinear)[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("score of the exact Gaussian velocity matches numeric differentiation") {
  Rng rng = make_stream(4, 0);
  const auto field = standard_normal_field();
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double t = uniform(rng, 1e-3, 1 - 1e-3), x = 3 * standard_normal(rng);
    const Array xa = Array::matrix(1, 1, {x});
    const double s = score_from_velocity(field(xa, t), xa, t, kLinear)[0];
    const double h = 1e-5;
    const double numeric = (log_marginal(x + h, t) - log_marginal(x - h, t)) / (2 * h);
    worst = std::max(worst, std::abs(s - numeric));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ode on trivial fields") {
  Array x0 = Array::matrix(3, 2, {0.1, -0.2, 1.0, 2.0, -3.0, 0.5});
  for (auto m : {Method::OdeEuler, Method::OdeHeun}) {
    const auto cfg = config(m, 50, 0.0);
    auto zero = [](const Array& x, double) { return Array(x.shape()); };
    CHECK(ode_sample(zero, x0, cfg, kLinear) == x0);
    auto constant = [](const Array& x, double) { return Array(x.shape(), 0.75); };
    const Array out = ode_sample(constant, x0, cfg, kLinear);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(out[i] == doctest::Approx(x0[i] + (1 - 2e-3) * 0.75).epsilon(1e-13));
  }
  CHECK_THROWS(ode_sample([](const Array& x, double) { return x; }, x0, config(Method::Sde, 10, 0.1), kLinear));
}

TEST_CASE("ode transports to a point mass") {
  const double mu = -0.4;
  Rng rng = make_stream(5, 0);
  Array x0({20, 1});
  for (double& v : x0.data()) v = 2 * standard_normal(rng);
  for (auto m : {Method::OdeEuler, Method::OdeHeun}) {
    const Array x1 = ode_sample(point_mass_field(mu), x0, config(m, 200, 0.0), kLinear);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(x1[i] - mu) < 5 * 1e-3 * std::abs(x0[i] - mu));
  }
}

TEST_CASE("w = 0 SDE equals the Euler ODE state by state") {
  Rng rng = make_stream(6, 0);
  Array x0({64, 2});
  for (double& v : x0.data()) v = standard_normal(rng);
  auto field = [](const Array& x, double t) {
    Array v = x;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(3 * x[i] + t) - 0.5 * x[i] * t;
    return v;
  };
  std::vector<Array> ode_states, sde_states;
  ode_sample(field, x0, config(Method::OdeEuler, 37, 0.0), kLinear,
             [&](std::size_t, double, const Array& x) { ode_states.push_back(x); });
  std::vector<Rng> rngs(64, make_stream(1, 1));
  sde_sample(field, x0, config(Method::Sde, 37, 0.0), kLinear, rngs,
             [&](std::size_t, double, const Array& x) { sde_states.push_back(x); });
  REQUIRE(ode_states.size() == 37);
  CHECK(ode_states == sde_states);

  auto cfg = config(Method::Sde, 37, 0.0, 9);
  const Array a = generate_ensemble(field, 2, 300, cfg, kLinear, 1);
  cfg.method = Method::OdeEuler;
  CHECK(generate_ensemble(field, 2, 300, cfg, kLinear, 1) == a);
}

TEST_CASE("SDE preserves the Gaussian marginal") {
  const auto field = standard_normal_field();
  // Compared against Euler so that both sides carry the same first-order
  // time-discretization bias.
  const Stats ode = stats(generate_ensemble(field, 1, 100000, config(Method::OdeEuler, 200, 0.0, 10), kLinear));
  for (double w : {0.01, 0.1}) {
    const Stats sde = stats(generate_ensemble(field, 1, 100000, config(Method::Sde, 200, w, 11), kLinear));
    CHECK(std::abs(sde.mean) < 0.02);
    CHECK(std::abs(sde.var - 1.0) < 0.03);
    // Two-sigma agreement with the ODE ensemble (independent draws).
    const double se_mean = std::sqrt((sde.var + ode.var) / 100000.0);
    const double se_var = std::sqrt(2.0 * (sde.var * sde.var + ode.var * ode.var) / 100000.0);
    CHECK(std::abs(sde.mean - ode.mean) < 2 * se_mean);
    CHECK(std::abs(sde.var - ode.var) < 2 * se_var);
  }
}

TEST_CASE("larger score norm increases per-step displacement variance") {
  const auto field = standard_normal_field();
  auto displacement_variance = [&](double w) {
    Rng rng = make_stream(12, 0);
    Array x0({2000, 1});
    for (double& v : x0.data()) v = standard_normal(rng);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < 2000; ++i) rngs.push_back(make_stream(13, i));
    Array prev = x0;
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    sde_sample(field, x0, config(Method::Sde, 50, w), kLinear, rngs, [&](std::size_t, double, const Array& x) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - prev[i];
        sum += d;
        sum2 += d * d;
        ++n;
      }
      prev = x;
    });
    const double m = sum / static_cast<double>(n);
    return sum2 / static_cast<double>(n) - m * m;
  };
  const double v0 = displacement_variance(0.0), v1 = displacement_variance(0.01), v2 = displacement_variance(0.1);
  CHECK(v0 < v1);
  CHECK(v1 < v2);
}

TEST_CASE("ensembles are deterministic and independent of batching") {
  const auto field = standard_normal_field();
  const auto cfg = config(Method::Sde, 20, 0.1, 77);
  const Array a = generate_ensemble(field, 2, 600, cfg, kLinear, 1);
  CHECK(generate_ensemble(field, 2, 600, cfg, kLinear, 1) == a);
  CHECK(generate_ensemble(field, 2, 600, cfg, kLinear, 3) == a);
  const Array head = generate_ensemble(field, 2, 1, cfg, kLinear, 1);
  CHECK(head(0, 0) == a(0, 0));
  CHECK(head(0, 1) == a(0, 1));

  // n = 1 is a single sampler call on the stream (seed, 0).
  Rng rng = make_stream(77, 0);
  Array x0({1, 2});
  for (double& v : x0.data()) v = standard_normal(rng);
  std::vector<Rng> rngs{rng};
  CHECK(sde_sample(field, x0, cfg, kLinear, rngs) == head);
  CHECK_THROWS(generate_ensemble(field, 2, 0, cfg, kLinear));
}

TEST_CASE("non-finite states abort with the step index") {
  auto blowup = [](const Array& x, double t) {
    Array v = x;
    for (double& e : v.data()) e = t > 0.45 ? std::numeric_limits<double>::infinity() : 0.0;
    return v;
  };
  const Array x0 = Array::matrix(1, 1, {0.0});
  try {
    std::vector<Rng> rngs{make_stream(1, 0)};
    sde_sample(blowup, x0, config(Method::Sde, 10, 0.2), kLinear, rngs);
    FAIL("expected SamplerError");
  } catch (const SamplerError& e) {
    CHECK(e.step() == 6);
    CHECK(e.score_norm() == 0.2);
  }
  CHECK_THROWS_AS(ode_sample(blowup, x0, config(Method::OdeEuler, 10, 0.0), kLinear), SamplerError);
}
