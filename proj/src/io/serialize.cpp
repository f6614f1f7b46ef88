#include "epo/io/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "epo/io/config.hpp"

namespace epo::io {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw CheckpointError(where + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) bad(where, std::string("missing '") + key + "'");
  return j.at(key);
}

std::uint64_t uint_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_unsigned()) bad(where + "." + key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double number_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number()) bad(where + "." + key, "expected a number");
  return v.get<double>();
}

std::string string_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) bad(where + "." + key, "expected a string");
  return v.get<std::string>();
}

json spec_to_json(const flow::ModelSpec& s) {
  return json{{"dim", s.dim},
              {"hidden", s.hidden},
              {"time_features", s.time_features},
              {"periodic", s.periodic},
              {"condition", s.condition}};
}

flow::ModelSpec spec_from_json(const json& j) {
  try {
    ObjectReader r(j, "architecture");
    flow::ModelSpec s;
    s.dim = r.unsigned_int("dim", 0);
    s.hidden = r.sizes("hidden", {});
    s.time_features = r.unsigned_int("time_features", s.time_features);
    s.periodic = r.boolean("periodic", false);
    s.condition = r.numbers("condition", {});
    r.finish();
    s.validate();
    return s;
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
}

void put_csv_row(std::string& out, std::size_t index, std::span<const double> row) {
  out += std::to_string(index);
  for (double v : row) {
    out += ',';
    out += format_double(v);
  }
  out += '\n';
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json array_to_json(const Array& a) { return json{{"shape", a.shape()}, {"data", a.values()}}; }

Array array_from_json(const json& j, const std::string& where) {
  const json& shape = field(j, "shape", where);
  const json& data = field(j, "data", where);
  if (!shape.is_array() || shape.empty() || shape.size() > 2) bad(where, "shape must have 1 or 2 entries");
  diff::Shape s;
  std::size_t total = 1;
  for (const auto& e : shape) {
    if (!e.is_number_unsigned()) bad(where, "shape entries must be non-negative integers");
    s.push_back(e.get<std::size_t>());
    total *= s.back();
  }
  if (!data.is_array() || data.size() != total) bad(where, "data length does not match shape");
  std::vector<double> v;
  v.reserve(total);
  for (const auto& e : data) {
    if (!e.is_number()) bad(where, "non-numeric value (non-finite weights cannot be stored)");
    v.push_back(e.get<double>());
  }
  return Array(std::move(s), std::move(v));
}

json model_to_json(const flow::VelocityModel& m) {
  json weights = json::array();
  json adapters = json::array();
  for (const auto& layer : m.layers()) {
    weights.push_back({{"weight", array_to_json(layer.weight)}, {"bias", array_to_json(layer.bias)}});
    if (layer.adapter) {
      adapters.push_back({{"down", array_to_json(layer.adapter->down)},
                          {"up", array_to_json(layer.adapter->up)},
                          {"scale", layer.adapter->scale}});
    }
  }
  return json{{"architecture", spec_to_json(m.spec())},
              {"weights", weights},
              {"adapters", m.has_adapters() ? adapters : json(nullptr)}};
}

flow::VelocityModel model_from_json(const json& j) {
  const flow::ModelSpec spec = spec_from_json(field(j, "architecture", "checkpoint"));
  const json& weights = field(j, "weights", "checkpoint");
  const json& adapters = field(j, "adapters", "checkpoint");
  if (!weights.is_array()) bad("checkpoint.weights", "expected an array");
  if (!adapters.is_null() && (!adapters.is_array() || adapters.size() != weights.size())) {
    bad("checkpoint.adapters", "expected null or one entry per layer");
  }
  std::vector<flow::AffineLayer> layers;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::string where = "checkpoint.weights[" + std::to_string(i) + "]";
    flow::AffineLayer layer;
    layer.weight = array_from_json(field(weights[i], "weight", where), where + ".weight");
    layer.bias = array_from_json(field(weights[i], "bias", where), where + ".bias");
    if (adapters.is_array()) {
      const std::string aw = "checkpoint.adapters[" + std::to_string(i) + "]";
      flow::LowRankAdapter a;
      a.down = array_from_json(field(adapters[i], "down", aw), aw + ".down");
      a.up = array_from_json(field(adapters[i], "up", aw), aw + ".up");
      a.scale = number_field(adapters[i], "scale", aw);
      layer.adapter = std::move(a);
    }
    layers.push_back(std::move(layer));
  }
  try {
    return flow::VelocityModel(spec, std::move(layers));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: weights do not match the architecture: ") + e.what());
  }
}

json adam_to_json(const diff::AdamState& s) {
  json first = json::array(), second = json::array();
  for (const auto& a : s.first_moment) first.push_back(array_to_json(a));
  for (const auto& a : s.second_moment) second.push_back(array_to_json(a));
  return json{{"lr", s.config.lr},
              {"beta1", s.config.beta1},
              {"beta2", s.config.beta2},
              {"eps", s.config.eps},
              {"step", s.step},
              {"first_moment", first},
              {"second_moment", second}};
}

diff::AdamState adam_from_json(const json& j) {
  const std::string where = "checkpoint.optimizer";
  diff::AdamState s;
  s.config.lr = number_field(j, "lr", where);
  s.config.beta1 = number_field(j, "beta1", where);
  s.config.beta2 = number_field(j, "beta2", where);
  s.config.eps = number_field(j, "eps", where);
  s.step = uint_field(j, "step", where);
  const json& first = field(j, "first_moment", where);
  const json& second = field(j, "second_moment", where);
  if (!first.is_array() || !second.is_array() || first.size() != second.size()) {
    bad(where, "moment lists must be arrays of equal length");
  }
  for (std::size_t i = 0; i < first.size(); ++i) {
    s.first_moment.push_back(array_from_json(first[i], where + ".first_moment"));
    s.second_moment.push_back(array_from_json(second[i], where + ".second_moment"));
  }
  return s;
}

json runlog_to_json(const refine::RunLog& log) {
  json records = json::array(), evals = json::array();
  for (const auto& r : log.records) {
    records.push_back({{"iteration", r.iteration},
                       {"loss", r.loss},
                       {"energy_mean", r.energy_mean},
                       {"energy_min", r.energy_min},
                       {"energy_max", r.energy_max}});
  }
  for (const auto& e : log.evals) {
    evals.push_back({{"iteration", e.iteration}, {"mode_masses", e.mode_masses}, {"jsd", e.jsd}});
  }
  return json{{"config_hash", log.config_hash}, {"records", records}, {"evals", evals}};
}

refine::RunLog runlog_from_json(const json& j) {
  const std::string where = "runlog";
  refine::RunLog log;
  log.config_hash = string_field(j, "config_hash", where);
  for (const auto& r : field(j, "records", where)) {
    log.records.push_back({uint_field(r, "iteration", where), number_field(r, "loss", where),
                           number_field(r, "energy_mean", where), number_field(r, "energy_min", where),
                           number_field(r, "energy_max", where)});
  }
  for (const auto& e : field(j, "evals", where)) {
    refine::EvalRecord rec;
    rec.iteration = uint_field(e, "iteration", where);
    rec.mode_masses = field(e, "mode_masses", where).get<std::vector<double>>();
    rec.jsd = number_field(e, "jsd", where);
    log.evals.push_back(std::move(rec));
  }
  return log;
}

json checkpoint_to_json(const Checkpoint& c) {
  json j = model_to_json(c.model);
  j["format_version"] = kFormatVersion;
  j["stage"] = c.stage;
  j["schedule"] = flow::to_string(c.schedule);
  j["step"] = c.step;
  j["rng"] = {{"seed", c.rng.seed}, {"step", c.rng.step}};
  j["optimizer"] = c.optimizer ? adam_to_json(*c.optimizer) : json(nullptr);
  j["config_hash"] = c.config_hash;
  if (c.runlog) j["runlog"] = runlog_to_json(*c.runlog);
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  const std::string where = "checkpoint";
  const std::uint64_t version = uint_field(j, "format_version", where);
  if (version != kFormatVersion) {
    bad(where, "unsupported format_version " + std::to_string(version) + " (this build reads " +
                   std::to_string(kFormatVersion) + ")");
  }
  Checkpoint c{string_field(j, "stage", where), model_from_json(j), flow::ScheduleKind::LinearOT, 0, {}, {}, {}, {}};
  if (c.stage != "pretrain" && c.stage != "refine") bad(where + ".stage", "expected pretrain or refine");
  try {
    c.schedule = flow::parse_schedule_kind(string_field(j, "schedule", where));
  } catch (const std::invalid_argument& e) {
    bad(where + ".schedule", e.what());
  }
  c.step = uint_field(j, "step", where);
  const json& rng = field(j, "rng", where);
  c.rng = {uint_field(rng, "seed", where + ".rng"), uint_field(rng, "step", where + ".rng")};
  const json& opt = field(j, "optimizer", where);
  if (!opt.is_null()) c.optimizer = adam_from_json(opt);
  c.config_hash = string_field(j, "config_hash", where);
  if (j.contains("runlog")) c.runlog = runlog_from_json(j.at("runlog"));
  return c;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_json(const std::string& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json load_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { save_json(path, checkpoint_to_json(c)); }

Checkpoint load_checkpoint(const std::string& path) {
  json j;
  try {
    j = load_json(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  return checkpoint_from_json(j);
}

std::string samples_csv_header(std::size_t dim) {
  std::string out = "index";
  for (std::size_t k = 0; k < dim; ++k) out += ",x" + std::to_string(k);
  return out + '\n';
}

std::string samples_csv(const Array& samples, std::size_t dim) {
  if (samples.rank() != 2 || samples.cols() != dim) throw diff::ShapeError("samples_csv: expected [n x " + std::to_string(dim) + "]");
  std::string out = samples_csv_header(dim);
  for (std::size_t i = 0; i < samples.rows(); ++i) put_csv_row(out, i, samples.row(i));
  return out;
}

Array read_samples_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "': empty file");
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (dim == 0 || line.rfind("index", 0) != 0) throw std::runtime_error("'" + path + "': expected header index,x0,...");
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    std::size_t cols = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("'" + path + "' line " + std::to_string(rows + 2) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != dim) {
      throw std::runtime_error("'" + path + "' line " + std::to_string(rows + 2) + ": expected " +
                               std::to_string(dim) + " values");
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("'" + path + "' holds no samples");
  return Array({rows, dim}, std::move(data));
}

std::string loss_trace_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i + 1) + "," + format_double(losses[i]) + "\n";
  return out;
}

std::string runlog_csv(const refine::RunLog& log) {
  std::string out = "iteration,loss,energy_mean,energy_min,energy_max\n";
  for (const auto& r : log.records) {
    out += std::to_string(r.iteration) + "," + format_double(r.loss) + "," + format_double(r.energy_mean) + "," +
           format_double(r.energy_min) + "," + format_double(r.energy_max) + "\n";
  }
  return out;
}

std::string line_chart_svg(const std::string& title, const std::vector<SvgSeries>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 40;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  if (!(xhi > xlo)) xhi = xlo + 1.0;
  if (!(yhi > ylo)) yhi = ylo + 1.0;
  if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">" << title
    << "</text>\n"
    << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<text x=\"" << L << "\" y=\"" << H - 15 << "\" font-size=\"11\" font-family=\"sans-serif\">" << xlo
    << "</text>\n"
    << "<text x=\"" << W - R << "\" y=\"" << H - 15 << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
    << xhi << "</text>\n"
    << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
    << ylo << "</text>\n"
    << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
    << yhi << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << colors[k % 5] << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double px = L + (s.x[i] - xlo) / (xhi - xlo) * (W - L - R);
      const double py = H - B - (s.y[i] - ylo) / (yhi - ylo) * (H - T - B);
      o << px << "," << py << " ";
    }
    o << "\"/>\n<text x=\"" << W - R - 4 << "\" y=\"" << T + 16 + 14 * k << "\" text-anchor=\"end\" fill=\""
      << colors[k % 5] << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap_svg(const std::string& title, const std::vector<double>& values, std::size_t nx, std::size_t ny) {
  constexpr double cell = 8.0, top = 36.0;
  double lo = INFINITY, hi = -INFINITY;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << nx * cell << "\" height=\"" << ny * cell + top
    << "\">\n<text x=\"4\" y=\"22\" font-family=\"sans-serif\">" << title << "</text>\n";
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double v = values[ix * ny + iy];
      if (!std::isfinite(v)) continue;
      const int shade = static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo)));
      // y grows upward in the data, downward in SVG
      o << "<rect x=\"" << ix * cell << "\" y=\"" << top + (ny - 1 - iy) * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace epo::io
