#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epo/diffcore/array.hpp"

namespace epo::diff {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::uint64_t step = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& parameter() const { return param_; }

 private:
  std::string param_;
};

/// Zero-initialized moments shaped like `params`.
AdamState make_adam_state(std::span<const Array* const> params, AdamConfig config);

/// One bias-corrected Adam update of `params` in place. Every gradient is
/// checked before any parameter is touched, so a failure leaves the
/// parameters and the state unchanged.
void adam_step(std::span<Array* const> params, std::span<const Array> grads, AdamState& state,
               std::span<const std::string> names);

}  // namespace epo::diff
