#pragma once

#include <cstdint>
#include <string>

#include "epo/energy/potential.hpp"
#include "epo/flow/training.hpp"
#include "epo/io/json_reader.hpp"
#include "epo/preference/losses.hpp"
#include "epo/refine/types.hpp"
#include "epo/sampler/sampler.hpp"

namespace epo::io {

inline constexpr std::uint64_t kFormatVersion = 1;

struct DatasetConfig {
  /// mh-oracle | biased | csv
  std::string source = "mh-oracle";
  std::size_t n = 20000;
  /// Fraction of the biased dataset drawn from the cell left of the first
  /// partition boundary.
  double left_fraction = 0.9;
  std::string path;
  double mh_step = 0.8;
  std::size_t mh_burn_in = 1000;
  std::size_t mh_thinning = 10;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PretrainSection {
  DatasetConfig dataset;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 1e-3;

  friend bool operator==(const PretrainSection&, const PretrainSection&) = default;
};

struct RefineSection {
  refine::LossMethod method = refine::LossMethod::EpoList;
  std::size_t iterations = 1000;
  std::size_t lists_per_iteration = 4;
  double lr = 1e-5;
  std::size_t lora_rank = 4;
  double lora_scale = 1.0;
  std::size_t eval_every = 50;
  std::size_t eval_samples = 5000;
  std::size_t checkpoint_every = 100;

  friend bool operator==(const RefineSection&, const RefineSection&) = default;
};

struct MetricsSection {
  /// Histogram bins per axis for 1-D and 2-D states.
  std::size_t bins_1d = 200;
  std::size_t bins_2d = 50;
  std::size_t tica_lag = 1;
  /// mh-oracle | csv
  std::string reference = "mh-oracle";
  std::string reference_path;
  std::size_t reference_samples = 100000;
  /// Samples drawn when evaluating a checkpoint directly.
  std::size_t samples = 5000;
  bool svg = true;

  friend bool operator==(const MetricsSection&, const MetricsSection&) = default;
};

struct ModelSection {
  std::vector<std::size_t> hidden{128, 128, 128};
  std::size_t time_features = 16;
  std::vector<double> condition;

  friend bool operator==(const ModelSection&, const ModelSection&) = default;
};

struct RunConfig {
  std::uint64_t format_version = kFormatVersion;
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  energy::Potential potential = energy::make_preset("double-well");
  ModelSection model;
  flow::ScheduleKind schedule = flow::ScheduleKind::LinearOT;
  sampling::SamplerConfig sampler{50, sampling::Method::Sde, 0.01, flow::kDefaultTimeEps, 0};
  pref::PreferenceConfig preference;
  PretrainSection pretrain;
  RefineSection refine;
  MetricsSection metrics;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

json potential_to_json(const energy::Potential& p);
energy::Potential potential_from_json(ObjectReader r);

/// Full effective configuration, every default spelled out.
json to_json(const RunConfig& cfg);
/// Strict parse: unknown keys and wrong types raise ConfigError.
RunConfig run_config_from_json(const json& doc);
RunConfig load_run_config(const std::string& path);

flow::ModelSpec model_spec(const RunConfig& cfg);
refine::RefineConfig refine_config(const RunConfig& cfg);
json to_json(const refine::RefineConfig& cfg);

/// 64-bit FNV-1a of the compact serialization, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string config_hash(const json& doc);

}  // namespace epo::io
