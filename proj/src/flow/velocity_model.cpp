#include "epo/flow/velocity_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "epo/common/random.hpp"

namespace epo::flow {

void ModelSpec::validate() const {
  if (dim == 0) throw std::invalid_argument("model: state dimension must be positive");
  if (time_features % 2 != 0) throw std::invalid_argument("model: time_features must be even");
  for (auto h : hidden)
    if (h == 0) throw std::invalid_argument("model: hidden widths must be positive");
}

std::vector<double> time_frequencies(std::size_t time_features) {
  // Geometric ladder from pi/2 to 32*pi rad per unit time.
  const std::size_t n = time_features / 2;
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double e = n > 1 ? 6.0 * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    f[k] = 0.5 * std::numbers::pi * std::exp2(e);
  }
  return f;
}

namespace {

std::vector<std::size_t> layer_widths(const ModelSpec& spec) {
  std::vector<std::size_t> w{spec.input_width()};
  w.insert(w.end(), spec.hidden.begin(), spec.hidden.end());
  w.push_back(spec.dim);
  return w;
}

}  // namespace

VelocityModel::VelocityModel(ModelSpec spec, std::vector<AffineLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  const auto widths = layer_widths(spec_);
  if (layers_.size() != widths.size() - 1) throw std::invalid_argument("model: layer count does not match spec");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.weight.shape() != diff::Shape{widths[l], widths[l + 1]} || L.bias.shape() != diff::Shape{widths[l + 1]}) {
      throw diff::ShapeError("model: layer " + std::to_string(l) + " has shape " + diff::to_string(L.weight.shape()) +
                             ", expected " + diff::to_string({widths[l], widths[l + 1]}));
    }
    if (L.adapter) {
      if (L.adapter->down.rank() != 2 || L.adapter->down.rows() != widths[l] || L.adapter->up.rank() != 2 ||
          L.adapter->up.rows() != L.adapter->down.cols() || L.adapter->up.cols() != widths[l + 1]) {
        throw diff::ShapeError("model: adapter of layer " + std::to_string(l) + " does not fit the layer");
      }
    }
  }
}

VelocityModel VelocityModel::random(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, 0x5eed);
  const auto widths = layer_widths(spec);
  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    AffineLayer L{Array({widths[l], widths[l + 1]}), Array({widths[l + 1]}), std::nullopt};
    const double std = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (double& w : L.weight.data()) w = std * standard_normal(rng);
    layers.push_back(std::move(L));
  }
  return VelocityModel(spec, std::move(layers));
}

VelocityModel VelocityModel::zeros(const ModelSpec& spec) {
  spec.validate();
  const auto widths = layer_widths(spec);
  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    layers.push_back({Array({widths[l], widths[l + 1]}), Array({widths[l + 1]}), std::nullopt});
  return VelocityModel(spec, std::move(layers));
}

void VelocityModel::attach_adapters(std::size_t rank, double scale, std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("adapter rank must be positive");
  Rng rng = make_stream(seed, 0x10a);
  for (auto& L : layers_) {
    const std::size_t in = L.weight.rows(), out = L.weight.cols();
    LowRankAdapter a{Array({in, rank}), Array({rank, out}), scale};
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : a.down.data()) w = std * standard_normal(rng);
    L.adapter = std::move(a);
  }
}

bool VelocityModel::has_adapters() const {
  for (const auto& L : layers_)
    if (L.adapter) return true;
  return false;
}

VelocityModel VelocityModel::without_adapters() const {
  VelocityModel m = *this;
  for (auto& L : m.layers_) L.adapter.reset();
  return m;
}

void VelocityModel::check_input(const Array& x, std::size_t rows_t) const {
  if (x.rank() != 2 || x.cols() != spec_.dim) {
    throw diff::ShapeError("velocity: state shape " + diff::to_string(x.shape()) + " does not match model dimension " +
                           std::to_string(spec_.dim));
  }
  if (rows_t != x.rows()) throw diff::ShapeError("velocity: time count does not match batch size");
}

Array VelocityModel::features(const Array& x, std::span<const double> t) const {
  check_input(x, t.size());
  const std::size_t B = x.rows(), width = spec_.input_width();
  const auto freqs = time_frequencies(spec_.time_features);
  Array f({B, width});
  for (std::size_t i = 0; i < B; ++i) {
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) throw std::domain_error("velocity: t outside [0, 1]");
    auto row = f.row(i);
    std::size_t c = 0;
    for (std::size_t j = 0; j < spec_.dim; ++j) {
      if (spec_.periodic) {
        row[c++] = std::sin(x(i, j));
        row[c++] = std::cos(x(i, j));
      } else {
        row[c++] = x(i, j);
      }
    }
    for (double w : freqs) {
      row[c++] = std::sin(w * t[i]);
      row[c++] = std::cos(w * t[i]);
    }
    for (double v : spec_.condition) row[c++] = v;
  }
  return f;
}

Array VelocityModel::velocity(const Array& x, std::span<const double> t, bool adapters_on) const {
  Array h = features(x, t);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Array z = diff::affine(h, L.weight, L.bias);
    if (adapters_on && L.adapter) {
      z = diff::add(z, diff::scale(diff::matmul(diff::matmul(h, L.adapter->down), L.adapter->up), L.adapter->scale));
    }
    h = (l + 1 < layers_.size()) ? diff::tanh(z) : std::move(z);
  }
  return h;
}

Array VelocityModel::velocity(const Array& x, double t, bool adapters_on) const {
  std::vector<double> ts(x.rank() == 2 ? x.rows() : 1, t);
  return velocity(x, ts, adapters_on);
}

std::vector<Array*> VelocityModel::parameters(ParamGroup group) {
  std::vector<Array*> out;
  for (auto& L : layers_) {
    if (group == ParamGroup::Base) {
      out.push_back(&L.weight);
      out.push_back(&L.bias);
    } else if (L.adapter) {
      out.push_back(&L.adapter->down);
      out.push_back(&L.adapter->up);
    }
  }
  return out;
}

std::vector<const Array*> VelocityModel::parameters(ParamGroup group) const {
  auto mut = const_cast<VelocityModel*>(this)->parameters(group);
  return {mut.begin(), mut.end()};
}

std::vector<std::string> VelocityModel::parameter_names(ParamGroup group) const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    if (group == ParamGroup::Base) {
      out.push_back(p + "weight");
      out.push_back(p + "bias");
    } else if (layers_[l].adapter) {
      out.push_back(p + "lora_down");
      out.push_back(p + "lora_up");
    }
  }
  return out;
}

std::size_t VelocityModel::parameter_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const Array* p : parameters(group)) n += p->size();
  return n;
}

BoundModel::BoundModel(diff::Graph& graph, const VelocityModel& model, std::optional<ParamGroup> trainable,
                       bool adapters_on)
    : graph_(&graph), model_(&model), trainable_(trainable), adapters_on_(adapters_on) {
  const auto names_base = model.parameter_names(ParamGroup::Base);
  const auto names_lora = model.parameter_names(ParamGroup::Adapters);
  const bool train_base = trainable == ParamGroup::Base;
  const bool train_lora = trainable == ParamGroup::Adapters;
  std::size_t k = 0;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& L = model.layers()[l];
    Leaves lv{graph.leaf(L.weight, train_base, names_base[2 * l]), graph.leaf(L.bias, train_base, names_base[2 * l + 1]),
              std::nullopt, std::nullopt};
    if (L.adapter && adapters_on) {
      lv.down = graph.leaf(L.adapter->down, train_lora, names_lora[k]);
      lv.up = graph.leaf(L.adapter->up, train_lora, names_lora[k + 1]);
    }
    if (L.adapter) k += 2;
    leaves_.push_back(lv);
  }
}

diff::Var BoundModel::forward(diff::Var h) {
  const auto& layers = model_->layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lv = leaves_[l];
    diff::Var z = diff::affine(h, lv.weight, lv.bias);
    if (lv.down) {
      z = diff::add(z, diff::scale(diff::matmul(diff::matmul(h, *lv.down), *lv.up), layers[l].adapter->scale));
    }
    h = (l + 1 < layers.size()) ? diff::tanh(z) : z;
  }
  return h;
}

diff::Var BoundModel::velocity(const Array& x, std::span<const double> t) {
  return forward(graph_->constant(model_->features(x, t)));
}

std::vector<Array> BoundModel::gradients() const {
  std::vector<Array> out;
  if (!trainable_) return out;
  for (std::size_t l = 0; l < leaves_.size(); ++l) {
    const auto& lv = leaves_[l];
    if (*trainable_ == ParamGroup::Base) {
      out.push_back(lv.weight.grad());
      out.push_back(lv.bias.grad());
    } else if (model_->layers()[l].adapter) {
      if (lv.down) {
        out.push_back(lv.down->grad());
        out.push_back(lv.up->grad());
      } else {
        out.emplace_back(model_->layers()[l].adapter->down.shape());
        out.emplace_back(model_->layers()[l].adapter->up.shape());
      }
    }
  }
  return out;
}

}  // namespace epo::flow
