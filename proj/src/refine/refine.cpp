#include "epo/refine/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "epo/preference/losses.hpp"

namespace epo::refine {

using diff::Array;

namespace {

/// Stream index of the evaluation sampler; fixed so that successive
/// evaluations differ only through the model.
constexpr std::uint64_t kEvalStream = 0xe7a1;

}  // namespace

std::string to_string(LossMethod m) {
  switch (m) {
    case LossMethod::EpoList: return "epo-list";
    case LossMethod::EpoPair: return "epo-pair";
    case LossMethod::FlowDpo: return "flowdpo";
  }
  return "?";
}

LossMethod parse_loss_method(std::string_view name) {
  if (name == "epo-list") return LossMethod::EpoList;
  if (name == "epo-pair") return LossMethod::EpoPair;
  if (name == "flowdpo") return LossMethod::FlowDpo;
  throw std::invalid_argument("unknown refinement method '" + std::string(name) + "' (expected epo-list, epo-pair or flowdpo)");
}

void RefineConfig::validate() const {
  if (list_size < 2) throw std::invalid_argument("refine: K must be >= 2");
  if (!(beta > 0.0)) throw std::invalid_argument("refine: beta must be positive");
  if (lists_per_iteration == 0) throw std::invalid_argument("refine: lists per iteration must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("refine: lr must be finite and non-negative");
  if (lora_rank == 0) throw std::invalid_argument("refine: LoRA rank must be >= 1");
  sampler.validate();
}

RefineState init_refinement(const flow::VelocityModel& pretrained, const energy::Potential& p,
                            const RefineConfig& cfg) {
  cfg.validate();
  if (pretrained.dim() != p.dim()) {
    throw diff::ShapeError("init_refinement: model dimension " + std::to_string(pretrained.dim()) +
                           " does not match potential dimension " + std::to_string(p.dim()));
  }
  flow::ModelPair pair(pretrained, cfg.lora_rank, cfg.lora_scale, stream_seed(cfg.seed, 0x10a));
  const auto params = std::as_const(pair.opt()).parameters(flow::ParamGroup::Adapters);
  diff::AdamConfig adam;
  adam.lr = cfg.lr;
  auto state = diff::make_adam_state(params, adam);
  return RefineState{std::move(pair), std::move(state), 0, {}};
}

RefineState resume_refinement(const flow::VelocityModel& refined, diff::AdamState adam, std::size_t completed,
                              RunLog log) {
  return RefineState{flow::ModelPair::from_refined(refined), std::move(adam), completed, std::move(log)};
}

Evaluator Evaluator::for_potential(const energy::Potential& p) {
  Evaluator e;
  const std::size_t bins = p.dim() == 1 ? 200 : 50;
  e.spec = metrics::HistogramSpec::uniform(p.default_domain(), bins, p.periodic());
  e.oracle = metrics::oracle_bin_masses(p, e.spec);
  e.partition = p.default_partition();
  return e;
}

EvalRecord Evaluator::evaluate(const flow::VelocityModel& model, const flow::Schedule& sched,
                               const RefineConfig& cfg, std::size_t iteration) const {
  sampling::SamplerConfig sc = cfg.sampler;
  sc.method = sampling::Method::OdeHeun;
  sc.seed = stream_seed(cfg.seed, kEvalStream);
  const Array samples = sampling::generate_ensemble(sampling::model_field(model), model.dim(), cfg.eval_samples, sc, sched);
  EvalRecord r;
  r.iteration = iteration;
  r.mode_masses = metrics::mode_masses(samples, partition, 0);
  r.jsd = metrics::jsd(metrics::histogram(samples, spec).counts, oracle);
  return r;
}

IterationRecord epo_iteration(RefineState& state, const energy::Potential& p, const flow::Schedule& sched,
                              const RefineConfig& cfg) {
  const std::size_t it = state.completed;
  const std::uint64_t it_seed = stream_seed(cfg.seed, it);
  const std::size_t K = cfg.list_size;
  pref::PreferenceConfig pc;
  pc.beta = cfg.beta;
  pc.list_size = K;
  pc.shared_t = cfg.shared_t;
  pc.time_eps = cfg.sampler.time_eps;

  diff::Graph g;
  pref::PairGraph pg(g, state.models, sched);
  const auto field = sampling::model_field(state.models.opt(), true);
  std::vector<diff::Var> losses;
  IterationRecord rec;
  rec.iteration = it;
  rec.energy_min = std::numeric_limits<double>::infinity();
  rec.energy_max = -std::numeric_limits<double>::infinity();
  double energy_sum = 0.0;

  for (std::size_t l = 0; l < cfg.lists_per_iteration; ++l) {
    sampling::SamplerConfig sc = cfg.sampler;
    sc.seed = stream_seed(it_seed, 2 * l);
    Array samples = sampling::generate_ensemble(field, p.dim(), K, sc, sched, 1);
    const auto ranked = energy::rank_by_energy(p, std::move(samples));
    for (double e : ranked.energies) {
      energy_sum += e;
      rec.energy_min = std::min(rec.energy_min, e);
      rec.energy_max = std::max(rec.energy_max, e);
    }
    Rng rng = make_stream(it_seed, 2 * l + 1);
    const auto pairs = pref::draw_coupling_pairs(ranked, pc, rng);
    switch (cfg.method) {
      case LossMethod::EpoList: losses.push_back(pref::epo_list_loss(pg, pairs, cfg.beta)); break;
      case LossMethod::EpoPair: losses.push_back(pref::epo_pair_loss(pg, pairs, cfg.beta)); break;
      case LossMethod::FlowDpo:
        losses.push_back(pref::flowdpo_pair_loss(pg, pairs.front(), pairs.back(), cfg.beta));
        break;
    }
  }
  rec.energy_mean = energy_sum / static_cast<double>(K * cfg.lists_per_iteration);

  const diff::Var total = diff::mean(diff::concat(losses));
  rec.loss = total.value().item();
  if (!std::isfinite(rec.loss)) throw RefineDiverged(it);
  g.backward(total);
  const auto grads = pg.gradients();
  auto params = state.models.opt().parameters(flow::ParamGroup::Adapters);
  const auto names = state.models.opt().parameter_names(flow::ParamGroup::Adapters);
  diff::adam_step(params, grads, state.adam, names);
  ++state.completed;
  state.log.records.push_back(rec);
  return rec;
}

RefineState refine_run(RefineState state, const energy::Potential& p, const flow::Schedule& sched,
                       const RefineConfig& cfg, const CheckpointSink& on_checkpoint) {
  cfg.validate();
  if (state.models.opt().dim() != p.dim()) throw diff::ShapeError("refine_run: model and potential dimensions differ");
  if (state.completed >= cfg.iterations) return state;

  const bool evaluate = cfg.eval_samples > 0;
  std::optional<Evaluator> evaluator;
  if (evaluate) evaluator = Evaluator::for_potential(p);
  auto eval_now = [&] {
    state.log.evals.push_back(evaluator->evaluate(state.models.opt(), sched, cfg, state.completed));
  };
  if (evaluate && state.completed == 0 && state.log.evals.empty()) eval_now();

  while (state.completed < cfg.iterations) {
    epo_iteration(state, p, sched, cfg);
    const bool last = state.completed == cfg.iterations;
    if (evaluate && ((cfg.eval_every > 0 && state.completed % cfg.eval_every == 0) || last)) eval_now();
    if (on_checkpoint && cfg.checkpoint_every > 0 && state.completed % cfg.checkpoint_every == 0) on_checkpoint(state);
  }
  return state;
}

}  // namespace epo::refine
