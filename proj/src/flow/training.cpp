#include "epo/flow/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace epo::flow {

FmBatch draw_fm_batch(const Array& x1, Rng& rng, double time_eps) {
  if (x1.rank() != 2 || x1.rows() == 0) throw std::invalid_argument("fm batch must be a non-empty [B x d] array");
  FmBatch b{Array(x1.shape()), x1, std::vector<double>(x1.rows())};
  for (std::size_t i = 0; i < x1.rows(); ++i) {
    for (double& v : b.x0.row(i)) v = standard_normal(rng);
    b.t[i] = uniform(rng, time_eps, 1.0 - time_eps);
  }
  return b;
}

std::pair<Array, Array> interpolate(const FmBatch& batch, const Schedule& sched) {
  Array xt(batch.x1.shape()), target(batch.x1.shape());
  for (std::size_t i = 0; i < batch.x1.rows(); ++i) {
    const auto p = path_point(batch.x0.row(i), batch.x1.row(i), batch.t[i], sched);
    std::copy(p.x.begin(), p.x.end(), xt.row(i).begin());
    std::copy(p.velocity.begin(), p.velocity.end(), target.row(i).begin());
  }
  return {std::move(xt), std::move(target)};
}

diff::Var fm_loss(BoundModel& model, const FmBatch& batch, const Schedule& sched) {
  if (batch.x1.rank() != 2 || batch.x1.rows() == 0) throw std::invalid_argument("fm_loss: empty batch");
  auto [xt, target] = interpolate(batch, sched);
  diff::Graph& g = model.graph();
  diff::Var v = model.velocity(xt, batch.t);
  diff::Var err = diff::squared_error(v, g.constant(std::move(target)));
  // Sum over dimensions, mean over rows.
  const double d = static_cast<double>(batch.x1.cols());
  return diff::scale(diff::mean(err), d);
}

double fm_loss_value(const VelocityModel& model, const Array& x1, const Schedule& sched, Rng& rng, double time_eps) {
  diff::Graph g;
  BoundModel bound(g, model, std::nullopt);
  return fm_loss(bound, draw_fm_batch(x1, rng, time_eps), sched).value().item();
}

PretrainResult pretrain(VelocityModel model, const Array& data, const Schedule& sched, const PretrainConfig& cfg) {
  if (data.rank() != 2 || data.rows() == 0) throw std::invalid_argument("pretrain: dataset is empty");
  if (data.cols() != model.dim()) {
    throw diff::ShapeError("pretrain: dataset dimension " + std::to_string(data.cols()) +
                           " does not match model dimension " + std::to_string(model.dim()));
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("pretrain: batch size must be positive");

  PretrainResult result{model, {}, 0};
  if (cfg.epochs == 0) return result;

  VelocityModel& m = result.model;
  auto params = m.parameters(ParamGroup::Base);
  const auto names = m.parameter_names(ParamGroup::Base);
  diff::AdamState adam = diff::make_adam_state(std::vector<const Array*>(params.begin(), params.end()),
                                               diff::AdamConfig{.lr = cfg.lr});
  Rng rng = make_stream(cfg.seed, 0xf10);
  const std::size_t n = data.rows(), d = data.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      Array x1({len, d});
      for (std::size_t i = 0; i < len; ++i) {
        auto src = data.row(order[start + i]);
        std::copy(src.begin(), src.end(), x1.row(i).begin());
      }
      diff::Graph g;
      BoundModel bound(g, m, ParamGroup::Base);
      diff::Var loss = fm_loss(bound, draw_fm_batch(x1, rng, cfg.time_eps), sched);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw TrainingDiverged(epoch, result.steps);
      g.backward(loss);
      diff::adam_step(params, bound.gradients(), adam, names);
      acc += value;
      ++batches;
      ++result.steps;
    }
    result.loss_trace.push_back(acc / static_cast<double>(batches));
  }
  return result;
}

ModelPair::ModelPair(const VelocityModel& pretrained, std::size_t lora_rank, double lora_scale, std::uint64_t seed)
    : ref_(pretrained.without_adapters()), opt_(pretrained.without_adapters()) {
  if (pretrained.has_adapters()) throw std::invalid_argument("ModelPair: pretrained model already carries adapters");
  opt_.attach_adapters(lora_rank, lora_scale, seed);
}

ModelPair ModelPair::from_refined(VelocityModel opt) {
  if (!opt.has_adapters()) throw std::invalid_argument("ModelPair: refined model has no adapters");
  VelocityModel ref = opt.without_adapters();
  return ModelPair(std::move(ref), std::move(opt));
}

}  // namespace epo::flow
