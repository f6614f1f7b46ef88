#pragma once

#include <optional>
#include <string>
#include <vector>

#include "epo/diffcore/adam.hpp"
#include "epo/flow/schedule.hpp"
#include "epo/flow/velocity_model.hpp"
#include "epo/io/json_reader.hpp"
#include "epo/refine/types.hpp"

namespace epo::io {

using diff::Array;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RngPosition {
  std::uint64_t seed = 0;
  /// Number of stream draws consumed; streams are keyed on (seed, step).
  std::uint64_t step = 0;
  friend bool operator==(const RngPosition&, const RngPosition&) = default;
};

/// A model on disk. Refined checkpoints carry adapters and the optimizer
/// moments of the adapter group; the reference is the base weights.
struct Checkpoint {
  std::string stage;  // pretrain | refine
  flow::VelocityModel model;
  flow::ScheduleKind schedule = flow::ScheduleKind::LinearOT;
  /// Completed epochs (pretrain) or iterations (refine).
  std::uint64_t step = 0;
  RngPosition rng;
  std::optional<diff::AdamState> optimizer;
  std::string config_hash;
  std::optional<refine::RunLog> runlog;
};

json array_to_json(const Array& a);
Array array_from_json(const json& j, const std::string& where);

json model_to_json(const flow::VelocityModel& m);
flow::VelocityModel model_from_json(const json& j);

json adam_to_json(const diff::AdamState& s);
diff::AdamState adam_from_json(const json& j);

json runlog_to_json(const refine::RunLog& log);
refine::RunLog runlog_from_json(const json& j);

json checkpoint_to_json(const Checkpoint& c);
/// Rejects unsupported format versions and malformed content with
/// CheckpointError.
Checkpoint checkpoint_from_json(const json& j);

/// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

void save_json(const std::string& path, const json& j);
json load_json(const std::string& path);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Header "index,x0,...,x{d-1}" followed by one %.17g row per sample.
std::string samples_csv(const Array& samples, std::size_t dim);
std::string samples_csv_header(std::size_t dim);
Array read_samples_csv(const std::string& path);

std::string loss_trace_csv(const std::vector<double>& losses);
std::string runlog_csv(const refine::RunLog& log);

/// Minimal line chart; one polyline per series over a shared x axis.
struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};
std::string line_chart_svg(const std::string& title, const std::vector<SvgSeries>& series);
/// Heat map of a flat [nx x ny] grid (x slowest, as histograms store it);
/// non-finite cells are left blank.
std::string heatmap_svg(const std::string& title, const std::vector<double>& values, std::size_t nx, std::size_t ny);

std::string format_double(double v);

}  // namespace epo::io
