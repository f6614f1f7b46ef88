#include "epo/sampler/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace epo::sampling {

std::string to_string(Method m) {
  switch (m) {
    case Method::OdeEuler:
      return "ode-euler";
    case Method::OdeHeun:
      return "ode-heun";
    case Method::Sde:
      return "sde";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "ode-euler") return Method::OdeEuler;
  if (name == "ode-heun" || name == "ode") return Method::OdeHeun;
  if (name == "sde") return Method::Sde;
  throw std::invalid_argument("unknown sampler '" + std::string(name) + "' (expected ode-euler, ode-heun or sde)");
}

void SamplerConfig::validate() const {
  if (steps < 2) throw std::invalid_argument("sampler: steps must be >= 2");
  if (!(score_norm >= 0.0) || !std::isfinite(score_norm)) throw std::invalid_argument("sampler: score norm must be >= 0");
  if (!(time_eps > 0.0 && time_eps < 0.1)) throw std::invalid_argument("sampler: time clamp must lie in (0, 0.1)");
}

VelocityFn model_field(const flow::VelocityModel& model, bool adapters_on) {
  return [&model, adapters_on](const Array& x, double t) { return model.velocity(x, t, adapters_on); };
}

namespace {

struct ScoreCoefficients {
  double v_coef, x_coef;
};

ScoreCoefficients score_coefficients(double t, const flow::Schedule& sched) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("score: t outside [0, 1]");
  const double sigma = sched.sigma(t);
  const double den = sched.denominator(t);
  if (std::abs(sigma) < 1e-12 || std::abs(den) < 1e-12) {
    throw std::domain_error("score: singular time t=" + std::to_string(t));
  }
  const double norm = sigma * den;
  return {sched.alpha(t) / norm, sched.alpha_dot(t) / norm};
}

void check_finite(const Array& x, std::size_t step, double w) {
  if (!x.all_finite()) throw SamplerError(step, w);
}

void check_batch(const Array& x0) {
  if (x0.rank() != 2) throw diff::ShapeError("sampler: x0 must be [B x d], got " + diff::to_string(x0.shape()));
}

}  // namespace

std::vector<double> score_from_velocity(std::span<const double> v, std::span<const double> x, double t,
                                        const flow::Schedule& sched) {
  if (v.size() != x.size()) throw diff::ShapeError("score: velocity and state differ in dimension");
  const auto c = score_coefficients(t, sched);
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = c.v_coef * v[i] - c.x_coef * x[i];
  return s;
}

Array score_from_velocity(const Array& v, const Array& x, double t, const flow::Schedule& sched) {
  diff::require_same_shape(v, x, "score");
  const auto c = score_coefficients(t, sched);
  Array s(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = c.v_coef * v[i] - c.x_coef * x[i];
  return s;
}

Array ode_sample(const VelocityFn& field, Array x, const SamplerConfig& cfg, const flow::Schedule& /*sched*/,
                 const StepObserver& observe) {
  cfg.validate();
  check_batch(x);
  if (cfg.method == Method::Sde) throw std::invalid_argument("ode_sample: configured method is sde");
  const double t0 = cfg.time_eps;
  const double dt = (1.0 - 2.0 * cfg.time_eps) / static_cast<double>(cfg.steps);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const double t_next = t0 + static_cast<double>(k + 1) * dt;
    Array k1 = field(x, t);
    if (cfg.method == Method::OdeEuler) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += k1[i] * dt;
    } else {
      Array trial = x;
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] += k1[i] * dt;
      Array k2 = field(trial, t_next);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.5 * dt * (k1[i] + k2[i]);
    }
    check_finite(x, k + 1, 0.0);
    if (observe) observe(k + 1, t_next, x);
  }
  return x;
}

Array sde_sample(const VelocityFn& field, Array x, const SamplerConfig& cfg, const flow::Schedule& sched,
                 std::span<Rng> rngs, const StepObserver& observe) {
  cfg.validate();
  check_batch(x);
  if (rngs.size() != x.rows()) throw std::invalid_argument("sde_sample: need one RNG stream per row");
  const double w = cfg.score_norm;
  const double t0 = cfg.time_eps;
  const double dt = (1.0 - 2.0 * cfg.time_eps) / static_cast<double>(cfg.steps);
  const double noise_scale = std::sqrt(w * dt);
  const std::size_t d = x.cols();
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    Array drift = field(x, t);
    if (w > 0.0) {
      const Array s = score_from_velocity(drift, x, t, sched);
      for (std::size_t i = 0; i < x.size(); ++i) drift[i] += 0.5 * w * s[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += drift[i] * dt;
    if (w > 0.0 && k + 1 < cfg.steps) {
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) x(r, j) += noise_scale * standard_normal(rngs[r]);
    }
    check_finite(x, k + 1, w);
    if (observe) observe(k + 1, t0 + static_cast<double>(k + 1) * dt, x);
  }
  return x;
}

Array generate_ensemble(const VelocityFn& field, std::size_t dim, std::size_t n, const SamplerConfig& cfg,
                        const flow::Schedule& sched, std::size_t workers) {
  if (n == 0) throw std::invalid_argument("generate_ensemble: n must be >= 1");
  cfg.validate();
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  Array out({n, dim});

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunk, len = std::min(kChunk, n - begin);
    std::vector<Rng> rngs;
    rngs.reserve(len);
    Array x0({len, dim});
    for (std::size_t i = 0; i < len; ++i) {
      rngs.push_back(make_stream(cfg.seed, begin + i));
      for (double& v : x0.row(i)) v = standard_normal(rngs.back());
    }
    Array x = cfg.method == Method::Sde ? sde_sample(field, std::move(x0), cfg, sched, rngs)
                                        : ode_sample(field, std::move(x0), cfg, sched);
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * dim));
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace epo::sampling
