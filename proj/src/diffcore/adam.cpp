#include "epo/diffcore/adam.hpp"

#include <cmath>

namespace epo::diff {

AdamState make_adam_state(std::span<const Array* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Array* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

void adam_step(std::span<Array* const> params, std::span<const Array> grads, AdamState& state,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != names.size()) {
    throw ShapeError("adam_step: parameter, gradient, state and name counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "adam_step");
    require_same_shape(*params[i], state.first_moment[i], "adam_step state");
    if (!grads[i].all_finite()) throw NonFiniteGradient(names[i]);
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace epo::diff
