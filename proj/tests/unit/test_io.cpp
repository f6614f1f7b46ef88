#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "epo/app/commands.hpp"
#include "epo/app/gradcheck.hpp"
#include "epo/energy/boltzmann.hpp"
#include "epo/refine/refine.hpp"

using namespace epo;
using diff::Array;
using io::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(EPO_TEST_SCRATCH) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Small, fast end-to-end configuration.
io::RunConfig tiny_config(const fs::path& out) {
  io::RunConfig c;
  c.seed = 3;
  c.out = out.string();
  c.model.hidden = {8, 8};
  c.model.time_features = 4;
  c.sampler.steps = 10;
  c.preference.list_size = 4;
  c.pretrain.epochs = 2;
  c.pretrain.batch_size = 64;
  c.pretrain.dataset.source = "biased";
  c.pretrain.dataset.n = 500;
  c.refine.iterations = 4;
  c.refine.lists_per_iteration = 2;
  c.refine.lr = 1e-2;
  c.refine.eval_every = 2;
  c.refine.eval_samples = 100;
  c.refine.checkpoint_every = 2;
  c.metrics.reference_samples = 2000;
  c.metrics.samples = 200;
  return c;
}

std::string slurp(const fs::path& p) { return io::read_text(p.string()); }

void check_same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    INFO(n);
    CHECK(slurp(a / n) == slurp(b / n));
  }
}

}  // namespace

TEST_CASE("config round-trips with every default spelled out") {
  io::RunConfig c;
  const json j = io::to_json(c);
  CHECK(io::run_config_from_json(j) == c);
  CHECK(j.contains("preference"));
  CHECK(j["refine"]["lr"].get<double>() == 1e-5);

  io::RunConfig d = c;
  d.seed = 99;
  d.potential = energy::make_preset("mueller-brown", 15.0);
  d.schedule = flow::ScheduleKind::Trig;
  d.sampler.method = sampling::Method::OdeEuler;
  d.refine.method = refine::LossMethod::FlowDpo;
  d.model.condition = {0.5, -1.0};
  d.pretrain.dataset.source = "csv";
  d.pretrain.dataset.path = "data.csv";
  const io::RunConfig back = io::run_config_from_json(io::to_json(d));
  CHECK(back == d);
  CHECK(io::to_json(back) == io::to_json(d));
}

TEST_CASE("every explicit potential kind round-trips") {
  for (const auto& name : energy::preset_names()) {
    INFO(name);
    const auto p = energy::make_preset(name, 0.7);
    const json j = io::potential_to_json(p);
    CHECK(io::potential_from_json(io::ObjectReader(j, "potential")) == p);
  }
  const json preset = {{"preset", "tilted-double-well"}, {"kT", 2.0}};
  CHECK(io::potential_from_json(io::ObjectReader(preset, "potential")) == energy::make_preset("tilted-double-well", 2.0));
  const json explicit_well = {{"kind", "double-well"}, {"a", 3.0}, {"b", 0.25}};
  const auto p = io::potential_from_json(io::ObjectReader(explicit_well, "potential"));
  const double x[] = {0.0};
  CHECK(p.energy(x) == 3.0);
}

TEST_CASE("strict parsing names the offending key") {
  auto error_of = [](const json& j) {
    try {
      io::run_config_from_json(j);
    } catch (const io::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of(json{{"sed", 1}}).find("sed") != std::string::npos);
  CHECK(error_of(json{{"refine", {{"lerning_rate", 1e-3}}}}).find("refine.lerning_rate") != std::string::npos);
  CHECK(error_of(json{{"pretrain", {{"dataset", {{"sorce", "csv"}}}}}}).find("pretrain.dataset.sorce") !=
        std::string::npos);
  CHECK(error_of(json{{"seed", -1}}).find("seed") != std::string::npos);
  CHECK(error_of(json{{"seed", "one"}}).find("seed") != std::string::npos);
  CHECK(error_of(json{{"format_version", 2}}).find("format_version") != std::string::npos);
  CHECK(error_of(json{{"sampler", {{"method", "rk4"}}}}).find("sampler.method") != std::string::npos);
  CHECK(error_of(json{{"potential", {{"preset", "triple-well"}}}}).find("potential.preset") != std::string::npos);
  CHECK(error_of(json{{"potential", {{"kind", "double-well"}, {"c", 1}}}}).find("potential.c") != std::string::npos);
  CHECK(error_of(json{{"preference", {{"list_size", 1}}}}).find("list size") != std::string::npos);
  CHECK(error_of(json::array()).find("expected an object") != std::string::npos);
  CHECK(error_of(json::object()).empty());
}

TEST_CASE("shipped configs load") {
  for (const auto& e : fs::directory_iterator(fs::path(EPO_SOURCE_DIR) / "configs")) {
    INFO(e.path().string());
    const auto c = io::load_run_config(e.path().string());
    CHECK(io::run_config_from_json(io::to_json(c)) == c);
  }
  CHECK_THROWS_AS(io::load_run_config("/nonexistent/config.json"), io::ConfigError);
}

TEST_CASE("FNV-1a reference vectors") {
  CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(io::fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(io::fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("checkpoint save and load is bit-exact") {
  const auto dir = scratch("ckpt");
  flow::ModelSpec spec;
  spec.dim = 2;
  spec.hidden = {7, 5};
  spec.time_features = 6;
  spec.condition = {0.25};
  auto model = flow::VelocityModel::random(spec, 4);
  model.attach_adapters(2, 0.5, 9);
  for (Array* p : model.parameters(flow::ParamGroup::Adapters))
    for (double& v : p->data()) v += 1e-3 / 3.0;
  diff::AdamState adam = diff::make_adam_state(std::as_const(model).parameters(flow::ParamGroup::Adapters), {});
  adam.step = 3;
  adam.first_moment[0][0] = 1.0 / 7.0;
  refine::RunLog log{"abc", {{0, 1.0 / 3.0, 0.1, -0.2, 0.4}}, {{0, {0.9, 0.1}, 0.05}}};
  const io::Checkpoint c{"refine", model, flow::ScheduleKind::Trig, 3, {5, 3}, adam, "0123456789abcdef", log};

  const auto path = (dir / "c.json").string();
  io::save_checkpoint(path, c);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  const auto back = io::load_checkpoint(path);
  CHECK(back.model == c.model);
  CHECK(back.stage == "refine");
  CHECK(back.schedule == flow::ScheduleKind::Trig);
  CHECK(back.step == 3);
  CHECK(back.rng == c.rng);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->first_moment == adam.first_moment);
  CHECK(back.optimizer->step == 3);
  CHECK(back.runlog == log);
  CHECK(back.config_hash == c.config_hash);

  sampling::SamplerConfig sc{12, sampling::Method::Sde, 0.1, 1e-3, 8};
  const auto a = sampling::generate_ensemble(sampling::model_field(c.model), 2, 16, sc, flow::Schedule{});
  const auto b = sampling::generate_ensemble(sampling::model_field(back.model), 2, 16, sc, flow::Schedule{});
  CHECK(a == b);

  json j = io::checkpoint_to_json(c);
  j["format_version"] = 2;
  CHECK_THROWS_AS(io::checkpoint_from_json(j), io::CheckpointError);
  j = io::checkpoint_to_json(c);
  j["weights"][0]["weight"]["data"][0] = nullptr;
  CHECK_THROWS_AS(io::checkpoint_from_json(j), io::CheckpointError);
  j = io::checkpoint_to_json(c);
  j["architecture"]["hidden"] = {7, 6};
  CHECK_THROWS_AS(io::checkpoint_from_json(j), io::CheckpointError);
  io::write_text_atomic((dir / "bad.json").string(), slurp(path).substr(0, 100));
  CHECK_THROWS_AS(io::load_checkpoint((dir / "bad.json").string()), io::CheckpointError);
}

TEST_CASE("sample CSV round-trips without loss") {
  const auto dir = scratch("csv");
  Array x({3, 2}, {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, std::nextafter(1.0, 2.0)});
  const std::string text = io::samples_csv(x, 2);
  CHECK(text.rfind("index,x0,x1\n0,", 0) == 0);
  io::write_text_atomic((dir / "s.csv").string(), text);
  CHECK(io::read_samples_csv((dir / "s.csv").string()) == x);
  CHECK(io::samples_csv_header(3) == "index,x0,x1,x2\n");
  io::write_text_atomic((dir / "bad.csv").string(), "index,x0\n0,1.0,2.0\n");
  CHECK_THROWS(io::read_samples_csv((dir / "bad.csv").string()));
  io::write_text_atomic((dir / "nan.csv").string(), "index,x0\n0,abc\n");
  CHECK_THROWS(io::read_samples_csv((dir / "nan.csv").string()));
}

TEST_CASE("run log JSON round-trips") {
  refine::RunLog log{"h", {{0, 2.5, 0.1, 0.0, 0.3}, {1, 2.25, 0.05, -0.1, 0.2}}, {{0, {0.5, 0.5}, 0.01}}};
  CHECK(io::runlog_from_json(io::runlog_to_json(log)) == log);
  CHECK(io::runlog_csv(log).rfind("iteration,loss,energy_mean,energy_min,energy_max\n0,2.5,", 0) == 0);
}

TEST_CASE("biased dataset hits its split exactly") {
  auto c = tiny_config(scratch("ds"));
  c.pretrain.dataset.n = 2000;
  const auto d = app::build_dataset(c);
  CHECK(d.samples.rows() == 2000);
  CHECK(std::abs(d.mode_masses[0] - 0.9) < 1e-12);
  c.pretrain.dataset.left_fraction = 1.0;
  CHECK(app::build_dataset(c).mode_masses[0] == 1.0);
  c.pretrain.dataset.source = "mh-oracle";
  c.pretrain.dataset.n = 20000;
  CHECK(std::abs(app::build_dataset(c).mode_masses[0] - 0.5) < 0.05);
}

TEST_CASE("pretraining with zero epochs yields the initialized model") {
  auto c = tiny_config(scratch("p0"));
  c.pretrain.epochs = 0;
  const auto a = app::run_pretrain(c), b = app::run_pretrain(c);
  CHECK(a.loss_trace.empty());
  CHECK(io::checkpoint_to_json(a.checkpoint).dump() == io::checkpoint_to_json(b.checkpoint).dump());
  c.seed = 4;
  CHECK_FALSE(app::run_pretrain(c).checkpoint.model == a.checkpoint.model);
}

TEST_CASE("refinement with zero iterations samples exactly like its input") {
  auto c = tiny_config(scratch("r0"));
  const auto pre = app::run_pretrain(c);
  c.refine.iterations = 0;
  const auto out = app::run_refine(c, pre.checkpoint, false);
  CHECK(out.checkpoint.model.without_adapters() == pre.checkpoint.model);
  CHECK(out.log.records.empty());
  CHECK(app::run_sample(c, out.checkpoint, 50) == app::run_sample(c, pre.checkpoint, 50));
}

TEST_CASE("list loss at K = 2 matches the pairwise baseline end to end") {
  auto c = tiny_config(scratch("k2"));
  const auto pre = app::run_pretrain(c);
  const auto cfg = app::apply_overrides(c, {.method = "epo-list", .k = 2});
  const auto base = app::apply_overrides(c, {.method = "flowdpo", .k = 2});
  const auto a = app::run_refine(cfg, pre.checkpoint, false);
  const auto b = app::run_refine(base, pre.checkpoint, false);
  REQUIRE(a.log.records.size() == b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i)
    CHECK(std::abs(a.log.records[i].loss - b.log.records[i].loss) < 1e-10);
}

TEST_CASE("resume through a saved periodic checkpoint reproduces the run") {
  const auto dir = scratch("resume");
  auto c = tiny_config(dir);
  const auto pre = app::run_pretrain(c);
  std::vector<std::string> saved;
  const auto full = app::run_refine(c, pre.checkpoint, false, [&](const io::Checkpoint& k) {
    const auto p = (dir / ("it" + std::to_string(k.step) + ".json")).string();
    io::save_checkpoint(p, k);
    saved.push_back(p);
  });
  REQUIRE(saved.size() == 2);
  const auto mid = io::load_checkpoint(saved[0]);
  auto other_dir = c;
  other_dir.out = (dir / "elsewhere").string();
  const auto resumed = app::run_refine(other_dir, mid, true);
  CHECK(resumed.log == full.log);
  CHECK(io::checkpoint_to_json(resumed.checkpoint).dump() == io::checkpoint_to_json(full.checkpoint).dump());

  auto changed = c;
  changed.preference.beta = 2.0;
  CHECK_THROWS_AS(app::run_refine(changed, mid, true), io::ConfigError);
  CHECK_THROWS_AS(app::run_refine(c, mid, false), io::ConfigError);
  CHECK_THROWS_AS(app::run_refine(c, pre.checkpoint, true), io::ConfigError);
  auto trig = c;
  trig.schedule = flow::ScheduleKind::Trig;
  CHECK_THROWS_AS(app::run_refine(trig, pre.checkpoint, false), io::ConfigError);
}

TEST_CASE("sampler overrides and degenerate diffusion") {
  auto c = tiny_config(scratch("smp"));
  const auto pre = app::run_pretrain(c);
  const auto sde0 = app::apply_overrides(c, {.sampler = "sde", .score_norm = 0.0});
  const auto euler = app::apply_overrides(c, {.sampler = "ode-euler"});
  CHECK(io::samples_csv(app::run_sample(sde0, pre.checkpoint, 40), 1) ==
        io::samples_csv(app::run_sample(euler, pre.checkpoint, 40), 1));
  const auto sde = app::apply_overrides(c, {.sampler = "sde", .score_norm = 0.05});
  CHECK(app::run_sample(sde, pre.checkpoint, 5) == app::run_sample(sde, pre.checkpoint, 5));
  CHECK_FALSE(app::run_sample(sde, pre.checkpoint, 5) == app::run_sample(euler, pre.checkpoint, 5));
  CHECK_THROWS_AS(app::apply_overrides(c, {.sampler = "rk4"}), io::ConfigError);
  CHECK_THROWS_AS(app::apply_overrides(c, {.steps = 1}), io::ConfigError);
  CHECK_THROWS_AS(app::apply_overrides(c, {.method = "dpo"}), io::ConfigError);
  CHECK(app::apply_overrides(c, {.potential = "mueller-brown"}).potential.dim() == 2);
}

TEST_CASE("eval anchors and report layout") {
  auto c = tiny_config(scratch("ev"));
  energy::MhConfig mc;
  mc.n = 100000;
  mc.step = 0.8;
  mc.seed = 1;
  const Array a = energy::mh_sample(c.potential, mc).samples;
  mc.seed = 2;
  const Array b = energy::mh_sample(c.potential, mc).samples;

  const auto self = app::run_eval(c, a, a, true);
  std::map<std::string, json> m;
  for (const auto& e : self.report["metrics"]) m[e["name"].get<std::string>()] = e;
  CHECK(m.at("jsd")["value"].get<double>() == 0.0);
  CHECK(m.at("w2")["value"].get<double>() == 0.0);
  CHECK(m.at("jsd")["parameters"]["log_base"] == "e");
  CHECK(m.at("jsd")["parameters"]["histogram"]["bins"][0] == 200);

  const auto two = app::run_eval(c, a, b, true);
  for (const auto& e : two.report["metrics"]) {
    CHECK(e.contains("name"));
    CHECK(e.contains("value"));
    CHECK(e.contains("parameters"));
    if (e["name"] == "jsd") CHECK(e["value"].get<double>() < 0.005);
    if (e["name"] == "jsd_oracle") CHECK(e["value"].get<double>() < 0.005);
  }
  CHECK(two.report["format_version"] == io::kFormatVersion);
  CHECK(two.report["fes"]["kT"] == 1.0);
  CHECK(two.histogram_csv.rfind("x,model,reference,oracle\n", 0) == 0);
  CHECK(two.fes_csv.rfind("x,model,reference\n", 0) == 0);
  CHECK(two.svgs.size() == 2);

  const Array wide({10, 2}, 0.5);
  CHECK_THROWS_AS(app::run_eval(c, wide, a, true), diff::ShapeError);
}

TEST_CASE("two-dimensional eval includes the TIC projection") {
  auto c = tiny_config(scratch("ev2"));
  c.potential = energy::make_preset("mueller-brown", 15.0);
  energy::MhConfig mc;
  mc.n = 5000;
  mc.step = 0.1;
  mc.seed = 1;
  const Array ref = energy::mh_sample(c.potential, mc).samples;
  const auto out = app::run_eval(c, ref, ref, true);
  bool found = false;
  for (const auto& e : out.report["metrics"]) {
    if (e["name"] == "tic2d_jsd") {
      found = true;
      CHECK(e["value"].get<double>() == 0.0);
      CHECK(e["parameters"]["histogram"]["bins"][0] == 50);
    }
  }
  CHECK(found);
  CHECK(out.histogram_csv.rfind("x,y,model,reference,oracle\n", 0) == 0);
}

TEST_CASE("gradient suite passes, is stable and catches corruption") {
  std::ostringstream a, b, bad;
  CHECK(app::cmd_gradcheck(1, 5, "", a) == 0);
  CHECK(app::cmd_gradcheck(1, 5, "", b) == 0);
  CHECK(a.str() == b.str());
  CHECK(app::cmd_gradcheck(1, 5, "epo_pair", bad) != 0);
  CHECK(bad.str().find("FAIL") != std::string::npos);
}

TEST_CASE("commands write byte-identical artifacts on rerun") {
  const auto root = scratch("cmd");
  std::ostringstream log;
  auto run_all = [&](const std::string& tag) {
    auto c = tiny_config(root / tag);
    REQUIRE(app::cmd_pretrain(c, log) == 0);
    const auto pre = (root / tag / "checkpoint.json").string();
    auto r = c;
    r.out = (root / tag / "refine").string();
    REQUIRE(app::cmd_refine(r, pre, "", log) == 0);
    auto s = c;
    s.out = (root / tag / "sample").string();
    REQUIRE(app::cmd_sample(s, pre, 5, log) == 0);
    auto e = c;
    e.out = (root / tag / "eval").string();
    REQUIRE(app::cmd_eval(e, (root / tag / "sample" / "samples.csv").string(), "", log) == 0);
  };
  run_all("a");
  run_all("b");
  check_same_files(root / "a", root / "b", {"checkpoint.json", "loss_trace.csv", "dataset.csv"});
  check_same_files(root / "a" / "refine", root / "b" / "refine",
                   {"checkpoint.json", "runlog.json", "runlog.csv", "checkpoints/iter_000002.json"});
  check_same_files(root / "a" / "sample", root / "b" / "sample", {"samples.csv"});
  check_same_files(root / "a" / "eval", root / "b" / "eval", {"histogram.csv", "fes.csv"});
  CHECK(fs::exists(root / "a" / "timing.json"));

  auto n0 = tiny_config(root / "n0");
  REQUIRE(app::cmd_sample(n0, (root / "a" / "checkpoint.json").string(), 0, log) == 0);
  CHECK(slurp(root / "n0" / "samples.csv") == "index,x0\n");
  const auto meta = io::load_json((root / "n0" / "samples.meta.json").string());
  CHECK(meta["seed"] == 3);
  CHECK(meta["config"]["sampler"]["steps"] == 10);
}

TEST_CASE("commands fail cleanly on bad input") {
  const auto root = scratch("fail");
  std::ostringstream log;
  auto c = tiny_config(root);
  CHECK(app::cmd_refine(c, (root / "missing.json").string(), "", log) != 0);
  REQUIRE(app::cmd_pretrain(c, log) == 0);
  auto mb = c;
  mb.potential = energy::make_preset("mueller-brown");
  CHECK(app::cmd_refine(mb, (root / "checkpoint.json").string(), "", log) != 0);
  CHECK(log.str().find("dimension") != std::string::npos);
  CHECK(app::cmd_eval(c, "", "", log) != 0);
  c.pretrain.dataset.source = "csv";
  c.pretrain.dataset.path = (root / "nope.csv").string();
  CHECK(app::cmd_pretrain(c, log) != 0);
}
