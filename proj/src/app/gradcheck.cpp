#include "epo/app/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "epo/common/random.hpp"
#include "epo/flow/training.hpp"
#include "epo/preference/losses.hpp"

namespace epo::app {

namespace {

using diff::Array;
using diff::Var;

constexpr double kStep = 1e-5;
constexpr double kFloor = 1e-3;

double fd_error(const std::function<double()>& f, Array& x, const Array& analytic) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kStep;
    const double up = f();
    x[i] = keep - kStep;
    const double down = f();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * kStep);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), kFloor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

void corrupt_in_place(std::vector<Array>& grads) {
  for (auto& g : grads) {
    for (double& v : g.data()) v = v * 1.01 + 1e-2;
  }
}

Array random_array(diff::Shape shape, double sd, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data()) v = sd * standard_normal(rng);
  return a;
}

flow::ModelSpec random_spec(Rng& rng) {
  flow::ModelSpec s;
  s.dim = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 2.0));
  s.hidden = {6, 5};
  s.time_features = 4;
  s.periodic = uniform(rng, 0.0, 1.0) < 0.25;
  return s;
}

/// Pair with adapters whose up factors are non-zero, so theta_opt != theta_ref.
flow::ModelPair random_pair(Rng& rng) {
  const auto spec = random_spec(rng);
  const auto base = flow::VelocityModel::random(spec, rng());
  flow::ModelPair pair(base, 2, uniform(rng, 0.5, 1.5), rng());
  for (Array* p : pair.opt().parameters(flow::ParamGroup::Adapters)) {
    for (double& v : p->data()) v += 0.3 * standard_normal(rng);
  }
  return pair;
}

std::vector<pref::CouplingPair> random_pairs(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<pref::CouplingPair> out(n);
  const bool shared = uniform(rng, 0.0, 1.0) < 0.5;
  const double t = uniform(rng, 0.02, 0.98);
  for (auto& c : out) {
    c.y1.resize(dim);
    c.y0.resize(dim);
    for (double& v : c.y1) v = 1.5 * standard_normal(rng);
    for (double& v : c.y0) v = standard_normal(rng);
    c.t = shared ? t : uniform(rng, 0.02, 0.98);
  }
  return out;
}

using PairLoss = std::function<Var(pref::PairGraph&)>;

double adapter_check(flow::ModelPair& pair, const flow::Schedule& sched, const PairLoss& build, bool corrupt) {
  diff::Graph g;
  pref::PairGraph pg(g, pair, sched);
  g.backward(build(pg));
  auto grads = pg.gradients();
  if (corrupt) corrupt_in_place(grads);
  auto params = pair.opt().parameters(flow::ParamGroup::Adapters);
  auto value = [&] {
    diff::Graph gg;
    pref::PairGraph p2(gg, pair, sched);
    return build(p2).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, fd_error(value, *params[i], grads[i]));
  return worst;
}

double score_check(std::size_t K, bool pairwise, Rng& rng, bool corrupt) {
  Array s = random_array({K}, 2.0, rng);
  auto build = [&](diff::Graph& g, const Array& x, bool grad) {
    Var v = g.leaf(x, grad);
    return std::pair{v, pairwise ? pref::dpo_bt_from_scores(diff::slice(v, 0, 1), diff::slice(v, 1, 2))
                                 : pref::listwise_pl_from_scores(v)};
  };
  diff::Graph g;
  auto [leaf, loss] = build(g, s, true);
  g.backward(diff::sum(loss));
  std::vector<Array> grads{leaf.grad()};
  if (corrupt) corrupt_in_place(grads);
  auto value = [&] {
    diff::Graph gg;
    return diff::sum(build(gg, s, false).second).value().item();
  };
  return fd_error(value, s, grads[0]);
}

double fm_check(Rng& rng, const flow::Schedule& sched, bool corrupt) {
  const auto spec = random_spec(rng);
  auto model = flow::VelocityModel::random(spec, rng());
  const std::size_t n = 2 + static_cast<std::size_t>(uniform(rng, 0.0, 6.0));
  const Array x1 = random_array({n, spec.dim}, 1.5, rng);
  const flow::FmBatch batch = flow::draw_fm_batch(x1, rng);
  diff::Graph g;
  flow::BoundModel bound(g, model, flow::ParamGroup::Base);
  g.backward(flow::fm_loss(bound, batch, sched));
  auto grads = bound.gradients();
  if (corrupt) corrupt_in_place(grads);
  auto value = [&] {
    diff::Graph gg;
    flow::BoundModel b(gg, model, std::nullopt);
    return flow::fm_loss(b, batch, sched).value().item();
  };
  auto params = model.parameters(flow::ParamGroup::Base);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, fd_error(value, *params[i], grads[i]));
  return worst;
}

}  // namespace

std::vector<std::string> gradcheck_losses() {
  return {"fm_loss", "dpo_bt", "listwise_pl", "flowdpo_pair", "epo_score", "epo_list", "epo_pair"};
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts) {
  const auto names = gradcheck_losses();
  std::vector<GradcheckRow> rows;
  for (std::size_t li = 0; li < names.size(); ++li) {
    const std::string& name = names[li];
    const bool corrupt = opts.corrupt == name;
    GradcheckRow row{name, opts.configs, 0.0, false};
    for (std::size_t c = 0; c < opts.configs; ++c) {
      Rng rng = make_stream(stream_seed(opts.seed, li), c);
      const flow::Schedule sched(uniform(rng, 0.0, 1.0) < 0.5 ? flow::ScheduleKind::LinearOT
                                                               : flow::ScheduleKind::Trig);
      const double beta = std::exp(uniform(rng, std::log(0.1), std::log(10.0)));
      double err = 0.0;
      if (name == "fm_loss") {
        err = fm_check(rng, sched, corrupt);
      } else if (name == "dpo_bt") {
        err = score_check(2, true, rng, corrupt);
      } else if (name == "listwise_pl") {
        err = score_check(2 + static_cast<std::size_t>(uniform(rng, 0.0, 7.0)), false, rng, corrupt);
      } else {
        auto pair = random_pair(rng);
        const std::size_t dim = pair.opt().dim();
        const std::size_t K = name == "epo_score" ? 1 : name == "flowdpo_pair" ? 2
                                                  : 2 + static_cast<std::size_t>(uniform(rng, 0.0, 5.0));
        const auto pairs = random_pairs(K, dim, rng);
        PairLoss build;
        if (name == "flowdpo_pair") {
          build = [&](pref::PairGraph& pg) { return pref::flowdpo_pair_loss(pg, pairs[0], pairs[1], beta); };
        } else if (name == "epo_score") {
          build = [&](pref::PairGraph& pg) { return diff::sum(pref::epo_score(pg, pairs[0], beta)); };
        } else if (name == "epo_list") {
          build = [&](pref::PairGraph& pg) { return pref::epo_list_loss(pg, pairs, beta); };
        } else {
          build = [&](pref::PairGraph& pg) { return pref::epo_pair_loss(pg, pairs, beta); };
        }
        err = adapter_check(pair, sched, build, corrupt);
      }
      if (!std::isfinite(err)) err = INFINITY;
      row.max_rel_error = std::max(row.max_rel_error, err);
    }
    row.pass = row.max_rel_error < opts.tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace epo::app
