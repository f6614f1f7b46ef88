#include "epo/preference/losses.hpp"

#include <stdexcept>

namespace epo::pref {

void PreferenceConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("preference: beta must be positive");
  if (list_size < 2) throw std::invalid_argument("preference: list size must be >= 2");
  if (!(time_eps > 0.0 && time_eps < 0.5)) throw std::invalid_argument("preference: time clamp out of range");
}

std::vector<CouplingPair> draw_coupling_pairs(const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg,
                                              Rng& rng) {
  const std::size_t K = ranked.size();
  const double shared = uniform(rng, cfg.time_eps, 1.0 - cfg.time_eps);
  std::vector<CouplingPair> pairs(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto y1 = ranked.ranked(k);
    pairs[k].y1.assign(y1.begin(), y1.end());
    pairs[k].y0.resize(y1.size());
    for (double& v : pairs[k].y0) v = standard_normal(rng);
    pairs[k].t = cfg.shared_t ? shared : uniform(rng, cfg.time_eps, 1.0 - cfg.time_eps);
  }
  return pairs;
}

Var mse_t(flow::BoundModel& model, std::span<const CouplingPair> pairs, const flow::Schedule& sched) {
  if (pairs.empty()) throw std::invalid_argument("mse_t: no pairs");
  const std::size_t n = pairs.size(), d = pairs[0].y1.size();
  flow::FmBatch batch{Array({n, d}), Array({n, d}), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (pairs[i].y1.size() != d || pairs[i].y0.size() != d) throw diff::ShapeError("mse_t: pair dimensions differ");
    std::copy(pairs[i].y0.begin(), pairs[i].y0.end(), batch.x0.row(i).begin());
    std::copy(pairs[i].y1.begin(), pairs[i].y1.end(), batch.x1.row(i).begin());
    batch.t[i] = pairs[i].t;
  }
  auto [yt, target] = flow::interpolate(batch, sched);
  diff::Graph& g = model.graph();
  Var v = model.velocity(yt, batch.t);
  return diff::row_mean(diff::squared_error(v, g.constant(std::move(target))));
}

Var dpo_bt_from_scores(Var s_w, Var s_l) { return -diff::log_sigmoid(s_w - s_l); }

double dpo_bt_from_scores(double s_w, double s_l) { return -diff::log_sigmoid(s_w - s_l); }

Var listwise_pl_from_scores(Var scores) {
  const std::size_t K = scores.value().size();
  if (scores.value().rank() != 1 || K == 0) throw std::invalid_argument("listwise_pl: expected a non-empty score vector");
  std::vector<Var> terms;
  for (std::size_t k = 0; k < K; ++k) {
    Var tail = diff::slice(scores, k, K);
    terms.push_back(diff::logsumexp(tail) - diff::slice(scores, k, k + 1));
  }
  return diff::sum(diff::concat(terms));
}

double listwise_pl_from_scores(std::span<const double> scores) {
  diff::Graph g;
  return listwise_pl_from_scores(g.constant(Array::vector({scores.begin(), scores.end()}))).value().item();
}

PairGraph::PairGraph(diff::Graph& graph, const flow::ModelPair& models, const flow::Schedule& sched)
    : graph_(&graph),
      sched_(sched),
      opt_(graph, models.opt(), flow::ParamGroup::Adapters, true),
      ref_(graph, models.ref(), std::nullopt, false) {}

Var flowdpo_pair_loss(PairGraph& pg, const CouplingPair& winner, const CouplingPair& loser, double beta) {
  const CouplingPair w[] = {winner};
  const CouplingPair l[] = {loser};
  Var ref_w = pg.mse_ref(w), opt_w = pg.mse_opt(w);
  Var ref_l = pg.mse_ref(l), opt_l = pg.mse_opt(l);
  Var inside = diff::scale(ref_w - opt_w - ref_l + opt_l, beta);
  return diff::sum(-diff::log_sigmoid(inside));
}

Var epo_scores(PairGraph& pg, std::span<const CouplingPair> pairs, double beta) {
  return diff::scale(pg.mse_ref(pairs) - pg.mse_opt(pairs), beta);
}

Var epo_score(PairGraph& pg, const CouplingPair& pair, double beta) {
  const CouplingPair one[] = {pair};
  return epo_scores(pg, one, beta);
}

Var epo_list_loss(PairGraph& pg, std::span<const CouplingPair> ranked_pairs, double beta) {
  if (ranked_pairs.size() < 2) throw std::invalid_argument("epo_list_loss: need K >= 2");
  return listwise_pl_from_scores(epo_scores(pg, ranked_pairs, beta));
}

Var epo_list_loss(PairGraph& pg, const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg, Rng& rng) {
  if (ranked.size() < 2) throw std::invalid_argument("epo_list_loss: need K >= 2");
  const auto pairs = draw_coupling_pairs(ranked, cfg, rng);
  return epo_list_loss(pg, pairs, cfg.beta);
}

Var epo_pair_loss(PairGraph& pg, std::span<const CouplingPair> ranked_pairs, double beta) {
  const std::size_t K = ranked_pairs.size();
  if (K < 2) throw std::invalid_argument("epo_pair_loss: need K >= 2");
  std::vector<Var> losses;
  for (std::size_t k = 0; k + 1 < K; ++k) losses.push_back(flowdpo_pair_loss(pg, ranked_pairs[k], ranked_pairs[k + 1], beta));
  return diff::mean(diff::concat(losses));
}

Var epo_pair_loss(PairGraph& pg, const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg, Rng& rng) {
  if (ranked.size() < 2) throw std::invalid_argument("epo_pair_loss: need K >= 2");
  const auto pairs = draw_coupling_pairs(ranked, cfg, rng);
  return epo_pair_loss(pg, pairs, cfg.beta);
}

}  // namespace epo::pref
