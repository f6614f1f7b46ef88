#include "epo/app/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include "epo/app/gradcheck.hpp"
#include "epo/energy/boltzmann.hpp"
#include "epo/refine/refine.hpp"
#include "epo/sampler/sampler.hpp"

namespace epo::app {

namespace fs = std::filesystem;
using io::json;

namespace {

// Stream indices under the global seed; distinct per consumer.
constexpr std::uint64_t kDatasetStream = 0xda7a;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kPretrainStream = 0x7a1d;
constexpr std::uint64_t kReferenceStream = 0x0e7a;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string path_in(const io::RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

void write_config(const io::RunConfig& cfg) { io::save_json(path_in(cfg, "config.json"), io::to_json(cfg)); }

void write_timing(const io::RunConfig& cfg, const std::string& command, double secs) {
  io::save_json(path_in(cfg, "timing.json"), json{{"command", command}, {"wall_seconds", secs}});
}

energy::MhConfig mh_config(const io::RunConfig& cfg, std::size_t n, std::uint64_t seed) {
  const auto& d = cfg.pretrain.dataset;
  energy::MhConfig mc;
  mc.n = n;
  mc.step = d.mh_step;
  mc.burn_in = d.mh_burn_in;
  mc.thinning = d.mh_thinning;
  mc.seed = seed;
  return mc;
}

void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw diff::ShapeError(what + " has dimension " + std::to_string(got) + " but the potential has dimension " +
                           std::to_string(want));
  }
}

metrics::HistogramSpec eval_spec(const io::RunConfig& cfg) {
  const auto& p = cfg.potential;
  const std::size_t bins = p.dim() == 1 ? cfg.metrics.bins_1d : cfg.metrics.bins_2d;
  return metrics::HistogramSpec::uniform(p.default_domain(), bins, p.periodic());
}

std::vector<double> probabilities(const Array& samples, const metrics::HistogramSpec& spec) {
  const auto h = metrics::histogram(samples, spec);
  std::vector<double> p(h.counts.size(), 0.0);
  if (h.total == 0) return p;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = h.counts[i] / static_cast<double>(h.total);
  return p;
}

json spec_json(const metrics::HistogramSpec& s) {
  return json{{"bins", s.bins}, {"lo", s.lo}, {"hi", s.hi}, {"periodic", s.periodic}};
}

json metric(const std::string& name, json value, json params) {
  return json{{"name", name}, {"value", std::move(value)}, {"parameters", std::move(params)}};
}

/// Grid CSV: coordinates of each bin center followed by one column per field.
std::string grid_csv(const metrics::HistogramSpec& spec, const std::vector<std::string>& names,
                     const std::vector<std::vector<double>>& fields) {
  std::string out = spec.dim() == 1 ? "x" : "x,y";
  for (const auto& n : names) out += "," + n;
  out += '\n';
  const std::size_t total = spec.total_bins();
  for (std::size_t i = 0; i < total; ++i) {
    if (spec.dim() == 1) {
      out += io::format_double(spec.bin_center(0, i));
    } else {
      const std::size_t ny = spec.bins[1];
      out += io::format_double(spec.bin_center(0, i / ny)) + "," + io::format_double(spec.bin_center(1, i % ny));
    }
    for (const auto& f : fields) out += "," + io::format_double(f[i]);
    out += '\n';
  }
  return out;
}

std::vector<double> bin_centers(const metrics::HistogramSpec& spec) {
  std::vector<double> x(spec.bins[0]);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = spec.bin_center(0, i);
  return x;
}

io::Checkpoint refine_checkpoint(const refine::RefineState& s, const io::RunConfig& cfg, flow::ScheduleKind sched) {
  return io::Checkpoint{.stage = "refine",
                        .model = s.models.opt(),
                        .schedule = sched,
                        .step = s.completed,
                        .rng = {cfg.seed, s.completed},
                        .optimizer = s.adam,
                        .config_hash = s.log.config_hash,
                        .runlog = s.log};
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

io::RunConfig apply_overrides(io::RunConfig cfg, const Overrides& o) {
  try {
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out = *o.out;
    if (o.method) cfg.refine.method = refine::parse_loss_method(*o.method);
    if (o.sampler) cfg.sampler.method = sampling::parse_method(*o.sampler);
    if (o.steps) cfg.sampler.steps = *o.steps;
    if (o.score_norm) cfg.sampler.score_norm = *o.score_norm;
    if (o.beta) cfg.preference.beta = *o.beta;
    if (o.k) cfg.preference.list_size = *o.k;
    if (o.potential) cfg.potential = energy::make_preset(*o.potential, cfg.potential.kT());
    if (o.iterations) cfg.refine.iterations = *o.iterations;
    if (o.epochs) cfg.pretrain.epochs = *o.epochs;
    if (o.reference) {
      const std::string& r = *o.reference;
      if (r == "mh-oracle") {
        cfg.metrics.reference = r;
      } else {
        cfg.metrics.reference = "csv";
        cfg.metrics.reference_path = r;
      }
    }
    cfg.sampler.validate();
    cfg.preference.validate();
  } catch (const std::invalid_argument& e) {
    throw io::ConfigError(e.what());
  }
  return cfg;
}

std::string run_hash(const io::RunConfig& cfg) {
  json j = io::to_json(cfg);
  j.erase("out");
  return io::config_hash(j);
}

Dataset build_dataset(const io::RunConfig& cfg) {
  const auto& d = cfg.pretrain.dataset;
  const auto& p = cfg.potential;
  const std::uint64_t seed = stream_seed(cfg.seed, kDatasetStream);
  Dataset out;
  if (d.source == "csv") {
    out.samples = io::read_samples_csv(d.path);
    require_dim(out.samples.cols(), p.dim(), "dataset '" + d.path + "'");
  } else if (d.source == "mh-oracle") {
    out.samples = energy::mh_sample(p, mh_config(cfg, d.n, seed)).samples;
  } else {
    // Rejection split of successive MH chunks: keep draws in chain order
    // until both cells hold their quota.
    const double boundary = p.default_partition().at(0);
    const std::size_t n_left = static_cast<std::size_t>(std::llround(d.left_fraction * static_cast<double>(d.n)));
    const std::size_t n_right = d.n - n_left;
    const std::size_t chunk = std::max<std::size_t>(d.n, 1000);
    std::vector<double> rows;
    rows.reserve(d.n * p.dim());
    std::size_t have_left = 0, have_right = 0;
    for (std::uint64_t c = 0; have_left < n_left || have_right < n_right; ++c) {
      if (c == 1000) throw std::runtime_error("biased dataset: MH chain rarely visits one side of the partition");
      const Array draws = energy::mh_sample(p, mh_config(cfg, chunk, stream_seed(seed, c))).samples;
      for (std::size_t i = 0; i < draws.rows(); ++i) {
        const bool left = draws(i, 0) < boundary;
        std::size_t& have = left ? have_left : have_right;
        if (have >= (left ? n_left : n_right)) continue;
        ++have;
        rows.insert(rows.end(), draws.row(i).begin(), draws.row(i).end());
      }
    }
    out.samples = Array({d.n, p.dim()}, std::move(rows));
  }
  if (out.samples.rows() == 0) throw std::runtime_error("dataset is empty");
  out.mode_masses = metrics::mode_masses(out.samples, p.default_partition());
  return out;
}

Array reference_samples(const io::RunConfig& cfg) {
  if (cfg.metrics.reference == "csv") {
    Array r = io::read_samples_csv(cfg.metrics.reference_path);
    require_dim(r.cols(), cfg.potential.dim(), "reference '" + cfg.metrics.reference_path + "'");
    return r;
  }
  return energy::mh_sample(cfg.potential, mh_config(cfg, cfg.metrics.reference_samples,
                                                    stream_seed(cfg.seed, kReferenceStream)))
      .samples;
}

PretrainOutput run_pretrain(const io::RunConfig& cfg) {
  Dataset dataset = build_dataset(cfg);
  const auto spec = io::model_spec(cfg);
  flow::PretrainConfig pc;
  pc.epochs = cfg.pretrain.epochs;
  pc.batch_size = cfg.pretrain.batch_size;
  pc.lr = cfg.pretrain.lr;
  pc.seed = stream_seed(cfg.seed, kPretrainStream);
  auto result = flow::pretrain(flow::VelocityModel::random(spec, stream_seed(cfg.seed, kInitStream)),
                               dataset.samples, flow::Schedule(cfg.schedule), pc);
  io::Checkpoint ckpt{.stage = "pretrain",
                      .model = std::move(result.model),
                      .schedule = cfg.schedule,
                      .step = cfg.pretrain.epochs,
                      .rng = {cfg.seed, result.steps},
                      .optimizer = std::nullopt,
                      .config_hash = run_hash(cfg),
                      .runlog = std::nullopt};
  return PretrainOutput{std::move(ckpt), std::move(result.loss_trace), std::move(dataset)};
}

RefineOutput run_refine(const io::RunConfig& cfg, const io::Checkpoint& start, bool resume,
                        const std::function<void(const io::Checkpoint&)>& on_checkpoint) {
  const auto& p = cfg.potential;
  const auto rc = io::refine_config(cfg);
  const flow::Schedule sched(start.schedule);
  if (start.schedule != cfg.schedule) {
    throw io::ConfigError("checkpoint uses the " + flow::to_string(start.schedule) + " schedule but the config asks for " +
                          flow::to_string(cfg.schedule));
  }
  require_dim(start.model.dim(), p.dim(), "checkpoint model");
  const std::string hash = run_hash(cfg);

  refine::RefineState state = [&] {
    if (!resume) {
      if (start.stage != "pretrain") throw io::ConfigError("refine expects a pretrain checkpoint (use --resume for refine checkpoints)");
      auto s = refine::init_refinement(start.model, p, rc);
      s.log.config_hash = hash;
      return s;
    }
    if (start.stage != "refine" || !start.optimizer || !start.runlog) {
      throw io::ConfigError("resume expects a refine checkpoint with optimizer state and run log");
    }
    if (start.config_hash != hash) {
      throw io::ConfigError("resume checkpoint was written under a different configuration (hash " + start.config_hash +
                            ", current " + hash + ")");
    }
    return refine::resume_refinement(start.model, *start.optimizer, start.step, *start.runlog);
  }();

  refine::CheckpointSink sink;
  if (on_checkpoint) {
    sink = [&](const refine::RefineState& s) { on_checkpoint(refine_checkpoint(s, cfg, start.schedule)); };
  }
  state = refine::refine_run(std::move(state), p, sched, rc, sink);
  return RefineOutput{refine_checkpoint(state, cfg, start.schedule), state.log};
}

Array run_sample(const io::RunConfig& cfg, const io::Checkpoint& ckpt, std::size_t n) {
  sampling::SamplerConfig sc = cfg.sampler;
  sc.seed = cfg.seed;
  sc.validate();
  return sampling::generate_ensemble(sampling::model_field(ckpt.model), ckpt.model.dim(), n, sc,
                                     flow::Schedule(ckpt.schedule));
}

EvalOutput run_eval(const io::RunConfig& cfg, const Array& samples, const Array& reference,
                    bool reference_is_trajectory) {
  const auto& p = cfg.potential;
  if (samples.rank() != 2 || reference.rank() != 2) throw diff::ShapeError("eval: expected [n x d] sample arrays");
  require_dim(samples.cols(), p.dim(), "samples");
  require_dim(reference.cols(), p.dim(), "reference");
  if (samples.rows() == 0 || reference.rows() == 0) throw std::invalid_argument("eval: empty sample set");
  const std::size_t d = p.dim();
  const auto partition = p.default_partition();

  EvalOutput out;
  json list = json::array();
  const json log_base = "e";

  list.push_back(metric("mode_masses", metrics::mode_masses(samples, partition),
                        {{"partition", partition}, {"axis", 0}}));
  list.push_back(metric("reference_mode_masses", metrics::mode_masses(reference, partition),
                        {{"partition", partition}, {"axis", 0}}));

  if (d == 1) {
    std::vector<double> a(samples.values()), b(reference.values());
    list.push_back(metric("w2", metrics::w2_1d(a, b), {{"method", "quantile coupling"}}));
  } else {
    const auto ma = metrics::sample_moments(samples), mb = metrics::sample_moments(reference);
    list.push_back(metric("w2_gauss", metrics::w2_gauss(ma.mean, ma.covariance, mb.mean, mb.covariance),
                          {{"method", "Gaussian moment match"}}));
  }

  if (d <= 2) {
    const auto spec = eval_spec(cfg);
    const auto pa = probabilities(samples, spec), pb = probabilities(reference, spec);
    const auto oracle = metrics::oracle_bin_masses(p, spec);
    const json hist_params = {{"histogram", spec_json(spec)},
                              {"log_base", log_base},
                              {"smoothing", metrics::kHistogramSmoothing}};
    list.push_back(metric("jsd", metrics::jsd(pa, pb), hist_params));
    list.push_back(metric("jsd_oracle", metrics::jsd(pa, oracle), hist_params));
    out.histogram_csv = grid_csv(spec, {"model", "reference", "oracle"}, {pa, pb, oracle});

    const auto fa = metrics::fes_grid(samples, spec, p.kT());
    const auto fb = metrics::fes_grid(reference, spec, p.kT());
    out.fes_csv = grid_csv(spec, {"model", "reference"}, {fa.values, fb.values});
    out.report["fes"] = {{"kT", p.kT()},
                         {"histogram", spec_json(spec)},
                         {"empty_bin_cap_model", fa.cap},
                         {"empty_bin_cap_reference", fb.cap}};
    if (cfg.metrics.svg) {
      if (d == 1) {
        const auto x = bin_centers(spec);
        out.svgs.emplace_back("histogram.svg", io::line_chart_svg("bin probabilities", {{"model", x, pa},
                                                                                       {"reference", x, pb},
                                                                                       {"oracle", x, oracle}}));
        out.svgs.emplace_back("fes.svg", io::line_chart_svg("free energy (kT units scaled by kT)",
                                                            {{"model", x, fa.values}, {"reference", x, fb.values}}));
      } else {
        out.svgs.emplace_back("fes_model.svg", io::heatmap_svg("model FES", fa.values, spec.bins[0], spec.bins[1]));
        out.svgs.emplace_back("fes_reference.svg",
                              io::heatmap_svg("reference FES", fb.values, spec.bins[0], spec.bins[1]));
      }
    }
  }

  if (d >= 2 && reference.rows() > cfg.metrics.tica_lag + 2) {
    const auto t = metrics::tica(reference, cfg.metrics.tica_lag, 2);
    const Array ya = t.model.transform(samples), yb = t.projected;
    energy::Box box{{INFINITY, INFINITY}, {-INFINITY, -INFINITY}};
    for (std::size_t i = 0; i < yb.rows(); ++i) {
      for (std::size_t a = 0; a < 2; ++a) {
        box.lo[a] = std::min(box.lo[a], yb(i, a));
        box.hi[a] = std::max(box.hi[a], yb(i, a));
      }
    }
    const auto spec = metrics::HistogramSpec::uniform(box, cfg.metrics.bins_2d);
    list.push_back(metric("tic2d_jsd", metrics::jsd_hist(ya, yb, spec).value,
                          {{"histogram", spec_json(spec)},
                           {"lag", cfg.metrics.tica_lag},
                           {"log_base", log_base},
                           {"fit_on", "reference"},
                           {"reference_time_ordered", reference_is_trajectory},
                           {"eigenvalues", t.model.eigenvalues}}));
  }

  out.report["format_version"] = io::kFormatVersion;
  out.report["potential"] = io::potential_to_json(p);
  out.report["dim"] = d;
  out.report["n_samples"] = samples.rows();
  out.report["n_reference"] = reference.rows();
  out.report["metrics"] = list;
  return out;
}

int cmd_pretrain(const io::RunConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    const auto t0 = Clock::now();
    auto out = run_pretrain(cfg);
    write_config(cfg);
    io::write_text_atomic(path_in(cfg, "dataset.csv"), io::samples_csv(out.dataset.samples, cfg.potential.dim()));
    io::save_json(path_in(cfg, "dataset.meta.json"),
                  json{{"format_version", io::kFormatVersion},
                       {"source", cfg.pretrain.dataset.source},
                       {"n", out.dataset.samples.rows()},
                       {"mode_masses", out.dataset.mode_masses},
                       {"partition", cfg.potential.default_partition()}});
    io::save_checkpoint(path_in(cfg, "checkpoint.json"), out.checkpoint);
    io::write_text_atomic(path_in(cfg, "loss_trace.csv"), io::loss_trace_csv(out.loss_trace));
    if (cfg.metrics.svg) {
      std::vector<double> x(out.loss_trace.size());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
      io::write_text_atomic(path_in(cfg, "loss_trace.svg"),
                            io::line_chart_svg("flow-matching loss per epoch", {{"loss", x, out.loss_trace}}));
    }
    write_timing(cfg, "pretrain", seconds_since(t0));
    log << "pretrain: " << out.dataset.samples.rows() << " samples, mode masses";
    for (double m : out.dataset.mode_masses) log << " " << m;
    if (!out.loss_trace.empty()) log << ", final loss " << out.loss_trace.back();
    log << "\nwrote " << path_in(cfg, "checkpoint.json") << "\n";
    return 0;
  });
}

int cmd_refine(const io::RunConfig& cfg, const std::string& checkpoint, const std::string& resume, std::ostream& log) {
  return guarded(log, [&] {
    const auto t0 = Clock::now();
    if (checkpoint.empty() == resume.empty()) throw io::ConfigError("refine needs exactly one of --checkpoint or --resume");
    const bool resuming = !resume.empty();
    const auto start = io::load_checkpoint(resuming ? resume : checkpoint);
    write_config(cfg);
    auto periodic = [&](const io::Checkpoint& c) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoints/iter_%06llu.json", static_cast<unsigned long long>(c.step));
      io::save_checkpoint(path_in(cfg, name), c);
      log << "checkpoint at iteration " << c.step << "\n";
    };
    auto out = run_refine(cfg, start, resuming, periodic);
    io::save_checkpoint(path_in(cfg, "checkpoint.json"), out.checkpoint);
    io::save_json(path_in(cfg, "runlog.json"), io::runlog_to_json(out.log));
    io::write_text_atomic(path_in(cfg, "runlog.csv"), io::runlog_csv(out.log));
    if (cfg.metrics.svg && !out.log.records.empty()) {
      std::vector<double> it, loss, emean;
      for (const auto& r : out.log.records) {
        it.push_back(static_cast<double>(r.iteration));
        loss.push_back(r.loss);
        emean.push_back(r.energy_mean);
      }
      io::write_text_atomic(path_in(cfg, "refine_trace.svg"),
                            io::line_chart_svg("preference loss and mean energy",
                                               {{"loss", it, loss}, {"energy mean", it, emean}}));
    }
    write_timing(cfg, "refine", seconds_since(t0));
    for (const auto& e : out.log.evals) {
      log << "iteration " << e.iteration << ": jsd " << e.jsd << ", mode masses";
      for (double m : e.mode_masses) log << " " << m;
      log << "\n";
    }
    log << "wrote " << path_in(cfg, "checkpoint.json") << "\n";
    return 0;
  });
}

int cmd_sample(const io::RunConfig& cfg, const std::string& checkpoint, std::size_t n, std::ostream& log) {
  return guarded(log, [&] {
    if (checkpoint.empty()) throw io::ConfigError("sample needs --checkpoint");
    const auto t0 = Clock::now();
    const auto ckpt = io::load_checkpoint(checkpoint);
    const std::size_t dim = ckpt.model.dim();
    // Arrays are never empty, so n = 0 writes the header alone.
    io::write_text_atomic(path_in(cfg, "samples.csv"),
                          n == 0 ? io::samples_csv_header(dim) : io::samples_csv(run_sample(cfg, ckpt, n), dim));
    io::save_json(path_in(cfg, "samples.meta.json"),
                  json{{"format_version", io::kFormatVersion},
                       {"seed", cfg.seed},
                       {"n", n},
                       {"checkpoint", checkpoint},
                       {"checkpoint_config_hash", ckpt.config_hash},
                       {"config", io::to_json(cfg)}});
    write_timing(cfg, "sample", seconds_since(t0));
    log << "wrote " << n << " samples to " << path_in(cfg, "samples.csv") << "\n";
    return 0;
  });
}

int cmd_eval(const io::RunConfig& cfg, const std::string& samples_csv, const std::string& checkpoint,
             std::ostream& log) {
  return guarded(log, [&] {
    if (samples_csv.empty() == checkpoint.empty()) throw io::ConfigError("eval needs exactly one of --samples or --checkpoint");
    const auto t0 = Clock::now();
    const Array samples = samples_csv.empty() ? run_sample(cfg, io::load_checkpoint(checkpoint), cfg.metrics.samples)
                                              : io::read_samples_csv(samples_csv);
    const Array reference = reference_samples(cfg);
    auto out = run_eval(cfg, samples, reference, cfg.metrics.reference == "mh-oracle");
    out.report["inputs"] = {{"samples", samples_csv.empty() ? json(nullptr) : json(samples_csv)},
                            {"checkpoint", checkpoint.empty() ? json(nullptr) : json(checkpoint)},
                            {"reference", cfg.metrics.reference},
                            {"reference_path", cfg.metrics.reference_path}};
    out.report["config"] = io::to_json(cfg);
    io::save_json(path_in(cfg, "metrics.json"), out.report);
    if (!out.histogram_csv.empty()) io::write_text_atomic(path_in(cfg, "histogram.csv"), out.histogram_csv);
    if (!out.fes_csv.empty()) io::write_text_atomic(path_in(cfg, "fes.csv"), out.fes_csv);
    for (const auto& [name, svg] : out.svgs) io::write_text_atomic(path_in(cfg, name), svg);
    write_timing(cfg, "eval", seconds_since(t0));
    for (const auto& m : out.report["metrics"]) log << m["name"].get<std::string>() << ": " << m["value"].dump() << "\n";
    return 0;
  });
}

int cmd_gradcheck(std::uint64_t seed, std::size_t configs, const std::string& corrupt, std::ostream& log) {
  return guarded(log, [&] {
    GradcheckOptions opts;
    opts.seed = seed;
    opts.configs = configs;
    opts.corrupt = corrupt;
    const auto rows = run_gradcheck(opts);
    bool ok = true;
    char line[128];
    std::snprintf(line, sizeof line, "%-14s %8s %14s  %s\n", "loss", "configs", "max rel err", "result");
    log << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-14s %8zu %14.3e  %s\n", r.loss.c_str(), r.configs, r.max_rel_error,
                    r.pass ? "PASS" : "FAIL");
      log << line;
      ok = ok && r.pass;
    }
    return ok ? 0 : 1;
  });
}

}  // namespace epo::app
