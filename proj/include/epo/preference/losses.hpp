#pragma once

#include <span>
#include <vector>

#include "epo/common/random.hpp"
#include "epo/diffcore/graph.hpp"
#include "epo/energy/boltzmann.hpp"
#include "epo/flow/schedule.hpp"
#include "epo/flow/training.hpp"
#include "epo/flow/velocity_model.hpp"

namespace epo::pref {

using diff::Array;
using diff::Var;

struct PreferenceConfig {
  /// Score scale; applied once to MSE differences. Reproducing the
  /// per-step-discretized form means passing beta * T here.
  double beta = 1.0;
  std::size_t list_size = 8;
  /// One t per loss evaluation, shared by every list element.
  bool shared_t = true;
  double time_eps = flow::kDefaultTimeEps;

  void validate() const;
  friend bool operator==(const PreferenceConfig&, const PreferenceConfig&) = default;
};

/// A data-side endpoint y1, a fresh prior draw y0 and a time t.
struct CouplingPair {
  std::vector<double> y1;
  std::vector<double> y0;
  double t = 0.5;
};

/// Draws one pair per list element in rank order (best first): y0 ~ N(0, I),
/// t ~ U(eps, 1 - eps), drawn once when cfg.shared_t is set.
std::vector<CouplingPair> draw_coupling_pairs(const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg,
                                              Rng& rng);

/// Per-pair MSE_t(y0, y1; theta) = mean_d (v(y_t, t) - ydot_t)^2, shape [n].
Var mse_t(flow::BoundModel& model, std::span<const CouplingPair> pairs, const flow::Schedule& sched);

/// -log sigma(s_w - s_l)
Var dpo_bt_from_scores(Var s_w, Var s_l);
double dpo_bt_from_scores(double s_w, double s_l);

/// -sum_k log(exp(s_k) / sum_{j>=k} exp(s_j)) for scores in rank order.
Var listwise_pl_from_scores(Var scores);
double listwise_pl_from_scores(std::span<const double> scores);

/// theta_opt (trainable adapters) and theta_ref (constants) placed on one
/// graph, so every loss below is differentiable w.r.t. the adapters only.
class PairGraph {
 public:
  PairGraph(diff::Graph& graph, const flow::ModelPair& models, const flow::Schedule& sched);

  diff::Graph& graph() { return *graph_; }
  const flow::Schedule& schedule() const { return sched_; }
  Var mse_opt(std::span<const CouplingPair> pairs) { return mse_t(opt_, pairs, sched_); }
  Var mse_ref(std::span<const CouplingPair> pairs) { return mse_t(ref_, pairs, sched_); }
  /// Adapter gradients ordered like opt().parameters(ParamGroup::Adapters).
  std::vector<Array> gradients() const { return opt_.gradients(); }

 private:
  diff::Graph* graph_;
  flow::Schedule sched_;
  flow::BoundModel opt_;
  flow::BoundModel ref_;
};

/// -log sigma(beta [MSE(w;ref) - MSE(w;opt) - MSE(l;ref) + MSE(l;opt)])
Var flowdpo_pair_loss(PairGraph& pg, const CouplingPair& winner, const CouplingPair& loser, double beta);

/// s = beta (MSE(ref) - MSE(opt)) per pair, shape [n].
Var epo_scores(PairGraph& pg, std::span<const CouplingPair> pairs, double beta);
/// Scalar score of one pair.
Var epo_score(PairGraph& pg, const CouplingPair& pair, double beta);

/// Listwise bound for pairs already in rank order.
Var epo_list_loss(PairGraph& pg, std::span<const CouplingPair> ranked_pairs, double beta);
/// Draws pairs for `ranked` and evaluates the listwise bound.
Var epo_list_loss(PairGraph& pg, const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg, Rng& rng);

/// Mean FlowDPO loss over the K-1 adjacent pairs of the ranking.
Var epo_pair_loss(PairGraph& pg, std::span<const CouplingPair> ranked_pairs, double beta);
Var epo_pair_loss(PairGraph& pg, const energy::RankedEnsemble& ranked, const PreferenceConfig& cfg, Rng& rng);

}  // namespace epo::pref
