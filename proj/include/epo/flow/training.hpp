#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "epo/common/random.hpp"
#include "epo/diffcore/adam.hpp"
#include "epo/flow/schedule.hpp"
#include "epo/flow/velocity_model.hpp"

namespace epo::flow {

inline constexpr double kDefaultTimeEps = 1e-3;

/// One flow-matching minibatch: prior draws x0, data x1 and times t.
struct FmBatch {
  Array x0;
  Array x1;
  std::vector<double> t;
};

/// Draws x0 ~ N(0, I) and t ~ U(eps, 1 - eps) for every row of x1.
FmBatch draw_fm_batch(const Array& x1, Rng& rng, double time_eps = kDefaultTimeEps);

/// Interpolant positions and target velocities for a batch.
std::pair<Array, Array> interpolate(const FmBatch& batch, const Schedule& sched);

/// Mean over the batch of ||v(x_t, t) - xdot_t||^2 (summed over state
/// dimensions), as a scalar node on the model's graph.
diff::Var fm_loss(BoundModel& model, const FmBatch& batch, const Schedule& sched);

/// Loss value for a fresh batch draw; no gradients.
double fm_loss_value(const VelocityModel& model, const Array& x1, const Schedule& sched, Rng& rng,
                     double time_eps = kDefaultTimeEps);

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double time_eps = kDefaultTimeEps;
};

struct PretrainResult {
  VelocityModel model;
  /// Mean minibatch loss per epoch.
  std::vector<double> loss_trace;
  std::uint64_t steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t step)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t epoch_, step_;
};

/// Flow-matching training of every base parameter with Adam. Minibatches
/// come from a seeded shuffle of `data` [N x dim].
PretrainResult pretrain(VelocityModel model, const Array& data, const Schedule& sched, const PretrainConfig& cfg);

/// theta_opt (base weights plus trainable adapters) and the frozen
/// reference taken when refinement starts.
class ModelPair {
 public:
  /// `pretrained` must not carry adapters; they are attached to the opt copy.
  ModelPair(const VelocityModel& pretrained, std::size_t lora_rank, double lora_scale, std::uint64_t seed);
  /// Rebuilds a pair from a refined model whose base weights are the
  /// untouched pretrained weights.
  static ModelPair from_refined(VelocityModel opt);

  const VelocityModel& ref() const { return ref_; }
  const VelocityModel& opt() const { return opt_; }
  VelocityModel& opt() { return opt_; }

 private:
  ModelPair(VelocityModel ref, VelocityModel opt) : ref_(std::move(ref)), opt_(std::move(opt)) {}

  VelocityModel ref_;
  VelocityModel opt_;
};

}  // namespace epo::flow
