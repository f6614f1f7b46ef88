#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "epo/common/random.hpp"
#include "epo/diffcore/array.hpp"
#include "epo/flow/schedule.hpp"
#include "epo/flow/velocity_model.hpp"

namespace epo::sampling {

using diff::Array;

enum class Method { OdeEuler, OdeHeun, Sde };

std::string to_string(Method m);
Method parse_method(std::string_view name);

struct SamplerConfig {
  std::size_t steps = 50;
  Method method = Method::OdeHeun;
  /// Diffusion strength w of the SDE, constant in t.
  double score_norm = 0.01;
  double time_eps = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

class SamplerError : public std::runtime_error {
 public:
  SamplerError(std::size_t step, double score_norm)
      : std::runtime_error("non-finite state at step " + std::to_string(step) +
                           " (score norm w=" + std::to_string(score_norm) + ")"),
        step_(step),
        score_norm_(score_norm) {}
  std::size_t step() const { return step_; }
  double score_norm() const { return score_norm_; }

 private:
  std::size_t step_;
  double score_norm_;
};

/// Batched velocity field: rows of x [B x d] at a shared time t.
using VelocityFn = std::function<Array(const Array& x, double t)>;

VelocityFn model_field(const flow::VelocityModel& model, bool adapters_on = true);

/// Called with the state after every step (step index 1..T, time reached).
using StepObserver = std::function<void(std::size_t step, double t, const Array& x)>;

/// Score of the time-t marginal recovered from the velocity:
///   s = (alpha v - alpha_dot x) / (sigma (alpha_dot sigma - alpha sigma_dot)).
/// Throws std::domain_error when sigma or the denominator vanishes.
std::vector<double> score_from_velocity(std::span<const double> v, std::span<const double> x, double t,
                                        const flow::Schedule& sched);
Array score_from_velocity(const Array& v, const Array& x, double t, const flow::Schedule& sched);

/// Integrates dx = v dt from eps to 1 - eps in T uniform steps (Euler or Heun).
Array ode_sample(const VelocityFn& field, Array x0, const SamplerConfig& cfg, const flow::Schedule& sched,
                 const StepObserver& observe = {});

/// Euler-Maruyama on dx = (v + w s / 2) dt + sqrt(w) dW with s from the
/// velocity. Row i draws its noise from rngs[i]. The last step is noiseless.
Array sde_sample(const VelocityFn& field, Array x0, const SamplerConfig& cfg, const flow::Schedule& sched,
                 std::span<Rng> rngs, const StepObserver& observe = {});

/// n draws x0 ~ N(0, I) pushed through the configured sampler. Sample i uses
/// the stream derived from (cfg.seed, i) for its prior draw and its noise,
/// so the result is independent of `workers` and of batching.
Array generate_ensemble(const VelocityFn& field, std::size_t dim, std::size_t n, const SamplerConfig& cfg,
                        const flow::Schedule& sched, std::size_t workers = 0);

}  // namespace epo::sampling
