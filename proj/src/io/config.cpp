#include "epo/io/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace epo::io {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::vector<double>> matrix_of(ObjectReader& r, const std::string& key) {
  if (!r.has(key)) r.fail(key, "is required");
  const json& v = r.raw(key);
  if (!v.is_array()) r.fail(key, "expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : v) {
    if (!row.is_array()) r.fail(key, "expected an array of arrays");
    std::vector<double> vals;
    for (const auto& e : row) {
      if (!e.is_number()) r.fail(key, "expected numbers");
      vals.push_back(e.get<double>());
    }
    out.push_back(std::move(vals));
  }
  return out;
}

std::array<double, 4> four(ObjectReader& r, const std::string& key, const std::array<double, 4>& fallback) {
  const auto v = r.numbers(key, {fallback.begin(), fallback.end()});
  if (v.size() != 4) r.fail(key, "expected 4 numbers");
  return {v[0], v[1], v[2], v[3]};
}

std::size_t size_field(ObjectReader& r, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(r.unsigned_int(key, fallback));
}

json sampler_to_json(const sampling::SamplerConfig& s) {
  return json{{"method", sampling::to_string(s.method)},
              {"steps", s.steps},
              {"score_norm", s.score_norm},
              {"time_eps", s.time_eps}};
}

}  // namespace

json potential_to_json(const energy::Potential& p) {
  json j = std::visit(
      overloaded{
          [](const energy::DoubleWell& d) { return json{{"kind", "double-well"}, {"a", d.a}, {"b", d.b}}; },
          [](const energy::GaussianMixture& g) {
            return json{{"kind", "gaussian-mixture"},
                        {"dim", g.dim},
                        {"weights", g.weights},
                        {"means", g.means},
                        {"covariances", g.covariances}};
          },
          [](const energy::MuellerBrown& m) {
            return json{{"kind", "mueller-brown"}, {"A", m.A},   {"a", m.a},   {"b", m.b},
                        {"c", m.c},                {"x0", m.x0}, {"y0", m.y0}};
          },
          [](const energy::PeriodicTorsion& t) {
            return json{{"kind", "periodic-torsion"}, {"coefficients", t.coefficients}};
          }},
      p.kind());
  j["kT"] = p.kT();
  return j;
}

energy::Potential potential_from_json(ObjectReader r) {
  const double kT = r.number("kT", 1.0);
  if (r.has("preset")) {
    const std::string name = r.string("preset", "");
    r.finish();
    try {
      return energy::make_preset(name, kT);
    } catch (const std::invalid_argument& e) {
      r.fail("preset", e.what());
    }
  }
  const std::string kind = r.string("kind", "double-well");
  energy::PotentialKind k;
  if (kind == "double-well") {
    k = energy::DoubleWell{r.number("a", 2.0), r.number("b", 0.0)};
  } else if (kind == "gaussian-mixture") {
    energy::GaussianMixture g;
    g.dim = size_field(r, "dim", 1);
    g.weights = r.numbers("weights", {});
    g.means = matrix_of(r, "means");
    g.covariances = matrix_of(r, "covariances");
    k = g;
  } else if (kind == "mueller-brown") {
    const energy::MuellerBrown d;
    k = energy::MuellerBrown{four(r, "A", d.A), four(r, "a", d.a),   four(r, "b", d.b),
                             four(r, "c", d.c), four(r, "x0", d.x0), four(r, "y0", d.y0)};
  } else if (kind == "periodic-torsion") {
    k = energy::PeriodicTorsion{matrix_of(r, "coefficients")};
  } else {
    r.fail("kind", "unknown potential kind '" + kind + "'");
  }
  r.finish();
  try {
    return energy::Potential(std::move(k), kT);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.child_path("kind") + ": " + e.what());
  }
}

json to_json(const RunConfig& c) {
  const auto& d = c.pretrain.dataset;
  return json{
      {"format_version", c.format_version},
      {"seed", c.seed},
      {"out", c.out},
      {"potential", potential_to_json(c.potential)},
      {"model", {{"hidden", c.model.hidden}, {"time_features", c.model.time_features}, {"condition", c.model.condition}}},
      {"schedule", flow::to_string(c.schedule)},
      {"sampler", sampler_to_json(c.sampler)},
      {"preference",
       {{"beta", c.preference.beta},
        {"list_size", c.preference.list_size},
        {"shared_t", c.preference.shared_t},
        {"time_eps", c.preference.time_eps}}},
      {"pretrain",
       {{"epochs", c.pretrain.epochs},
        {"batch_size", c.pretrain.batch_size},
        {"lr", c.pretrain.lr},
        {"dataset",
         {{"source", d.source},
          {"n", d.n},
          {"left_fraction", d.left_fraction},
          {"path", d.path},
          {"mh_step", d.mh_step},
          {"mh_burn_in", d.mh_burn_in},
          {"mh_thinning", d.mh_thinning}}}}},
      {"refine",
       {{"method", refine::to_string(c.refine.method)},
        {"iterations", c.refine.iterations},
        {"lists_per_iteration", c.refine.lists_per_iteration},
        {"lr", c.refine.lr},
        {"lora_rank", c.refine.lora_rank},
        {"lora_scale", c.refine.lora_scale},
        {"eval_every", c.refine.eval_every},
        {"eval_samples", c.refine.eval_samples},
        {"checkpoint_every", c.refine.checkpoint_every}}},
      {"metrics",
       {{"bins_1d", c.metrics.bins_1d},
        {"bins_2d", c.metrics.bins_2d},
        {"tica_lag", c.metrics.tica_lag},
        {"reference", c.metrics.reference},
        {"reference_path", c.metrics.reference_path},
        {"reference_samples", c.metrics.reference_samples},
        {"samples", c.metrics.samples},
        {"svg", c.metrics.svg}}},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  ObjectReader r(doc, "");
  c.format_version = r.unsigned_int("format_version", kFormatVersion);
  if (c.format_version != kFormatVersion) {
    r.fail("format_version", "unsupported version " + std::to_string(c.format_version) + " (expected " +
                                 std::to_string(kFormatVersion) + ")");
  }
  c.seed = r.unsigned_int("seed", c.seed);
  c.out = r.string("out", c.out);
  if (r.has("potential")) c.potential = potential_from_json(r.object("potential"));

  {
    auto m = r.object("model");
    c.model.hidden = m.sizes("hidden", c.model.hidden);
    c.model.time_features = size_field(m, "time_features", c.model.time_features);
    c.model.condition = m.numbers("condition", c.model.condition);
    m.finish();
  }
  try {
    c.schedule = flow::parse_schedule_kind(r.string("schedule", flow::to_string(c.schedule)));
  } catch (const std::invalid_argument& e) {
    r.fail("schedule", e.what());
  }
  {
    auto s = r.object("sampler");
    try {
      c.sampler.method = sampling::parse_method(s.string("method", sampling::to_string(c.sampler.method)));
    } catch (const std::invalid_argument& e) {
      s.fail("method", e.what());
    }
    c.sampler.steps = size_field(s, "steps", c.sampler.steps);
    c.sampler.score_norm = s.number("score_norm", c.sampler.score_norm);
    c.sampler.time_eps = s.number("time_eps", c.sampler.time_eps);
    s.finish();
  }
  {
    auto p = r.object("preference");
    c.preference.beta = p.number("beta", c.preference.beta);
    c.preference.list_size = size_field(p, "list_size", c.preference.list_size);
    c.preference.shared_t = p.boolean("shared_t", c.preference.shared_t);
    c.preference.time_eps = p.number("time_eps", c.preference.time_eps);
    p.finish();
  }
  {
    auto p = r.object("pretrain");
    c.pretrain.epochs = size_field(p, "epochs", c.pretrain.epochs);
    c.pretrain.batch_size = size_field(p, "batch_size", c.pretrain.batch_size);
    c.pretrain.lr = p.number("lr", c.pretrain.lr);
    auto d = p.object("dataset");
    auto& ds = c.pretrain.dataset;
    ds.source = d.string("source", ds.source);
    if (ds.source != "mh-oracle" && ds.source != "biased" && ds.source != "csv") {
      d.fail("source", "expected mh-oracle, biased or csv");
    }
    ds.n = size_field(d, "n", ds.n);
    ds.left_fraction = d.number("left_fraction", ds.left_fraction);
    if (!(ds.left_fraction >= 0.0 && ds.left_fraction <= 1.0)) d.fail("left_fraction", "must lie in [0, 1]");
    ds.path = d.string("path", ds.path);
    ds.mh_step = d.number("mh_step", ds.mh_step);
    ds.mh_burn_in = size_field(d, "mh_burn_in", ds.mh_burn_in);
    ds.mh_thinning = size_field(d, "mh_thinning", ds.mh_thinning);
    d.finish();
    p.finish();
  }
  {
    auto f = r.object("refine");
    try {
      c.refine.method = refine::parse_loss_method(f.string("method", refine::to_string(c.refine.method)));
    } catch (const std::invalid_argument& e) {
      f.fail("method", e.what());
    }
    c.refine.iterations = size_field(f, "iterations", c.refine.iterations);
    c.refine.lists_per_iteration = size_field(f, "lists_per_iteration", c.refine.lists_per_iteration);
    c.refine.lr = f.number("lr", c.refine.lr);
    c.refine.lora_rank = size_field(f, "lora_rank", c.refine.lora_rank);
    c.refine.lora_scale = f.number("lora_scale", c.refine.lora_scale);
    c.refine.eval_every = size_field(f, "eval_every", c.refine.eval_every);
    c.refine.eval_samples = size_field(f, "eval_samples", c.refine.eval_samples);
    c.refine.checkpoint_every = size_field(f, "checkpoint_every", c.refine.checkpoint_every);
    f.finish();
  }
  {
    auto m = r.object("metrics");
    c.metrics.bins_1d = size_field(m, "bins_1d", c.metrics.bins_1d);
    c.metrics.bins_2d = size_field(m, "bins_2d", c.metrics.bins_2d);
    c.metrics.tica_lag = size_field(m, "tica_lag", c.metrics.tica_lag);
    c.metrics.reference = m.string("reference", c.metrics.reference);
    if (c.metrics.reference != "mh-oracle" && c.metrics.reference != "csv") {
      m.fail("reference", "expected mh-oracle or csv");
    }
    c.metrics.reference_path = m.string("reference_path", c.metrics.reference_path);
    c.metrics.reference_samples = size_field(m, "reference_samples", c.metrics.reference_samples);
    c.metrics.samples = size_field(m, "samples", c.metrics.samples);
    c.metrics.svg = m.boolean("svg", c.metrics.svg);
    m.finish();
  }
  r.finish();

  try {
    model_spec(c).validate();
    c.sampler.validate();
    c.preference.validate();
    refine_config(c).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

flow::ModelSpec model_spec(const RunConfig& cfg) {
  flow::ModelSpec s;
  s.dim = cfg.potential.dim();
  s.periodic = cfg.potential.periodic();
  s.hidden = cfg.model.hidden;
  s.time_features = cfg.model.time_features;
  s.condition = cfg.model.condition;
  return s;
}

refine::RefineConfig refine_config(const RunConfig& cfg) {
  refine::RefineConfig r;
  r.method = cfg.refine.method;
  r.list_size = cfg.preference.list_size;
  r.beta = cfg.preference.beta;
  r.shared_t = cfg.preference.shared_t;
  r.sampler = cfg.sampler;
  r.sampler.seed = cfg.seed;
  r.iterations = cfg.refine.iterations;
  r.lists_per_iteration = cfg.refine.lists_per_iteration;
  r.lr = cfg.refine.lr;
  r.lora_rank = cfg.refine.lora_rank;
  r.lora_scale = cfg.refine.lora_scale;
  r.eval_every = cfg.refine.eval_every;
  r.eval_samples = cfg.refine.eval_samples;
  r.checkpoint_every = cfg.refine.checkpoint_every;
  r.seed = cfg.seed;
  return r;
}

json to_json(const refine::RefineConfig& c) {
  return json{{"method", refine::to_string(c.method)},
              {"list_size", c.list_size},
              {"beta", c.beta},
              {"shared_t", c.shared_t},
              {"sampler", sampler_to_json(c.sampler)},
              {"iterations", c.iterations},
              {"lists_per_iteration", c.lists_per_iteration},
              {"lr", c.lr},
              {"lora_rank", c.lora_rank},
              {"lora_scale", c.lora_scale},
              {"eval_every", c.eval_every},
              {"eval_samples", c.eval_samples},
              {"checkpoint_every", c.checkpoint_every},
              {"seed", c.seed}};
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const json& doc) { return fnv1a_hex(doc.dump()); }

}  // namespace epo::io
