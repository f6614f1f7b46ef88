#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "epo/io/config.hpp"
#include "epo/io/serialize.hpp"
#include "epo/metrics/metrics.hpp"

namespace epo::app {

using diff::Array;

/// Command-line overrides applied on top of a loaded config.
struct Overrides {
  std::optional<std::uint64_t> seed{};
  std::optional<std::string> out{};
  std::optional<std::string> method{};
  std::optional<std::string> sampler{};
  std::optional<std::size_t> steps{};
  std::optional<double> score_norm{};
  std::optional<double> beta{};
  std::optional<std::size_t> k{};
  std::optional<std::string> potential{};
  std::optional<std::size_t> iterations{};
  std::optional<std::size_t> epochs{};
  std::optional<std::string> reference{};
};

/// Throws io::ConfigError for values that do not parse.
io::RunConfig apply_overrides(io::RunConfig cfg, const Overrides& o);

/// Hash of the effective config without the output directory, so a run can
/// be resumed into a different directory.
std::string run_hash(const io::RunConfig& cfg);

struct Dataset {
  Array samples;
  std::vector<double> mode_masses;
};

/// Pretraining data: MH samples of the potential, a rejection split of the
/// MH stream with a set fraction left of the first partition boundary, or a
/// CSV file.
Dataset build_dataset(const io::RunConfig& cfg);

/// MH reference ensemble used by eval (time-ordered chain).
Array reference_samples(const io::RunConfig& cfg);

struct PretrainOutput {
  io::Checkpoint checkpoint;
  std::vector<double> loss_trace;
  Dataset dataset;
};
PretrainOutput run_pretrain(const io::RunConfig& cfg);

struct RefineOutput {
  io::Checkpoint checkpoint;
  refine::RunLog log;
};
/// Refines a pretrained checkpoint, or continues from a refine checkpoint
/// when `resume` is set. `on_checkpoint` receives every periodic checkpoint.
RefineOutput run_refine(const io::RunConfig& cfg, const io::Checkpoint& start, bool resume,
                        const std::function<void(const io::Checkpoint&)>& on_checkpoint = {});

Array run_sample(const io::RunConfig& cfg, const io::Checkpoint& ckpt, std::size_t n);

/// Metrics comparing `samples` to `reference`. The report lists every
/// metric with its value and parameters; grids hold the CSV payloads.
struct EvalOutput {
  io::json report;
  std::string histogram_csv;
  std::string fes_csv;
  std::vector<std::pair<std::string, std::string>> svgs;  // file name, content
};
EvalOutput run_eval(const io::RunConfig& cfg, const Array& samples, const Array& reference,
                    bool reference_is_trajectory);

// File-writing commands used by the CLI. Each writes into cfg.out and
// returns a process exit code; diagnostics go to `err`.
int cmd_pretrain(const io::RunConfig& cfg, std::ostream& log);
int cmd_refine(const io::RunConfig& cfg, const std::string& checkpoint, const std::string& resume, std::ostream& log);
int cmd_sample(const io::RunConfig& cfg, const std::string& checkpoint, std::size_t n, std::ostream& log);
int cmd_eval(const io::RunConfig& cfg, const std::string& samples_csv, const std::string& checkpoint,
             std::ostream& log);
int cmd_gradcheck(std::uint64_t seed, std::size_t configs, const std::string& corrupt, std::ostream& log);

}  // namespace epo::app
