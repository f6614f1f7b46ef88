#pragma once

#include <functional>
#include <stdexcept>

#include "epo/diffcore/adam.hpp"
#include "epo/energy/boltzmann.hpp"
#include "epo/metrics/metrics.hpp"
#include "epo/refine/types.hpp"

namespace epo::refine {

class RefineDiverged : public std::runtime_error {
 public:
  explicit RefineDiverged(std::size_t iteration)
      : std::runtime_error("non-finite preference loss at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Everything needed to continue a run: the model pair, optimizer moments,
/// the number of completed iterations and the log so far.
struct RefineState {
  flow::ModelPair models;
  diff::AdamState adam;
  std::size_t completed = 0;
  RunLog log;
};

/// Frozen reference = pretrained weights; theta_opt = pretrained weights with
/// zero-contribution adapters. Throws diff::ShapeError when the model and the
/// potential disagree in dimension.
RefineState init_refinement(const flow::VelocityModel& pretrained, const energy::Potential& p,
                            const RefineConfig& cfg);

/// Rebuilds a state from a refined model and saved optimizer moments.
RefineState resume_refinement(const flow::VelocityModel& refined, diff::AdamState adam, std::size_t completed,
                              RunLog log);

/// Histogram and reference bin masses used by evaluations.
struct Evaluator {
  metrics::HistogramSpec spec;
  std::vector<double> oracle;
  std::vector<double> partition;

  static Evaluator for_potential(const energy::Potential& p);
  EvalRecord evaluate(const flow::VelocityModel& model, const flow::Schedule& sched, const RefineConfig& cfg,
                      std::size_t iteration) const;
};

/// One update: sample lists with the configured sampler from theta_opt, rank
/// them by energy, evaluate the configured loss and take an Adam step on the
/// adapters. Randomness comes from (cfg.seed, state.completed) only.
IterationRecord epo_iteration(RefineState& state, const energy::Potential& p, const flow::Schedule& sched,
                              const RefineConfig& cfg);

using CheckpointSink = std::function<void(const RefineState&)>;

/// Runs iterations until state.completed == cfg.iterations, evaluating on
/// the configured cadence and calling `on_checkpoint` every
/// cfg.checkpoint_every iterations.
RefineState refine_run(RefineState state, const energy::Potential& p, const flow::Schedule& sched,
                       const RefineConfig& cfg, const CheckpointSink& on_checkpoint = {});

}  // namespace epo::refine
