#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epo/flow/training.hpp"
#include "epo/sampler/sampler.hpp"

namespace epo::refine {

enum class LossMethod { EpoList, EpoPair, FlowDpo };

std::string to_string(LossMethod m);
LossMethod parse_loss_method(std::string_view name);

struct RefineConfig {
  LossMethod method = LossMethod::EpoList;
  std::size_t list_size = 8;
  double beta = 1.0;
  bool shared_t = true;
  sampling::SamplerConfig sampler{50, sampling::Method::Sde, 0.01, flow::kDefaultTimeEps, 0};
  std::size_t iterations = 1000;
  std::size_t lists_per_iteration = 4;
  double lr = 1e-5;
  std::size_t lora_rank = 4;
  double lora_scale = 1.0;
  /// Evaluate every this many iterations (0: only before and after the run).
  std::size_t eval_every = 50;
  /// ODE samples per evaluation (0 disables evaluation).
  std::size_t eval_samples = 5000;
  /// Periodic checkpoint cadence in iterations (0: none).
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const RefineConfig&, const RefineConfig&) = default;
};

struct EvalRecord {
  /// Completed iterations when the evaluation ran.
  std::size_t iteration = 0;
  std::vector<double> mode_masses;
  double jsd = 0.0;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  /// Loss before the update, averaged over the lists of the iteration.
  double loss = 0.0;
  double energy_mean = 0.0;
  double energy_min = 0.0;
  double energy_max = 0.0;
  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

/// Append-only log of a refinement run. Wall-clock time is kept out of it so
/// that two runs with the same configuration produce identical logs.
struct RunLog {
  std::string config_hash;
  std::vector<IterationRecord> records;
  std::vector<EvalRecord> evals;
  friend bool operator==(const RunLog&, const RunLog&) = default;
};

}  // namespace epo::refine
