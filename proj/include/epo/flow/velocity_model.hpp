#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epo/diffcore/array.hpp"
#include "epo/diffcore/graph.hpp"

namespace epo::flow {

using diff::Array;

struct ModelSpec {
  std::size_t dim = 1;
  std::vector<std::size_t> hidden{128, 128, 128};
  /// Number of sinusoidal time features (sin/cos pairs, so even).
  std::size_t time_features = 16;
  /// Embed each coordinate as (sin x, cos x) for 2*pi-periodic states.
  bool periodic = false;
  /// Fixed conditioning vector appended to every input; empty by default.
  std::vector<double> condition;

  std::size_t state_width() const { return periodic ? 2 * dim : dim; }
  std::size_t input_width() const { return state_width() + time_features + condition.size(); }
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Low-rank additive update W + scale * (down * up). `down` is stored
/// [in x r] and `up` [r x out], matching the [in x out] weight layout.
struct LowRankAdapter {
  Array down;
  Array up;
  double scale = 1.0;

  std::size_t rank() const { return down.cols(); }
  friend bool operator==(const LowRankAdapter&, const LowRankAdapter&) = default;
};

struct AffineLayer {
  Array weight;  // [in x out]
  Array bias;    // [out]
  std::optional<LowRankAdapter> adapter;

  friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

enum class ParamGroup { Base, Adapters };

/// MLP velocity field v(x, t): tanh hidden layers, linear output of width dim.
class VelocityModel {
 public:
  VelocityModel(ModelSpec spec, std::vector<AffineLayer> layers);

  static VelocityModel random(const ModelSpec& spec, std::uint64_t seed);
  static VelocityModel zeros(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.dim; }
  const std::vector<AffineLayer>& layers() const { return layers_; }

  /// Adds a zero-contribution adapter to every affine layer: `down` is drawn
  /// from N(0, 1/in) and `up` is zero.
  void attach_adapters(std::size_t rank, double scale, std::uint64_t seed);
  bool has_adapters() const;
  VelocityModel without_adapters() const;

  /// Network input rows [embed(x) ; time features ; condition].
  Array features(const Array& x, std::span<const double> t) const;
  /// Batched velocity for x [B x dim] and per-row times t (size B).
  Array velocity(const Array& x, std::span<const double> t, bool adapters_on = true) const;
  /// Batched velocity with one shared time.
  Array velocity(const Array& x, double t, bool adapters_on = true) const;

  std::vector<Array*> parameters(ParamGroup group);
  std::vector<const Array*> parameters(ParamGroup group) const;
  std::vector<std::string> parameter_names(ParamGroup group) const;
  std::size_t parameter_count(ParamGroup group) const;

  friend bool operator==(const VelocityModel&, const VelocityModel&) = default;

 private:
  void check_input(const Array& x, std::size_t rows_t) const;

  ModelSpec spec_;
  std::vector<AffineLayer> layers_;
};

std::vector<double> time_frequencies(std::size_t time_features);

/// A VelocityModel's parameters placed on a Graph. Parameters of the
/// trainable group become differentiable leaves; everything else is a
/// constant.
class BoundModel {
 public:
  BoundModel(diff::Graph& graph, const VelocityModel& model, std::optional<ParamGroup> trainable,
             bool adapters_on = true);

  diff::Var velocity(const Array& x, std::span<const double> t);
  diff::Var forward(diff::Var features);

  diff::Graph& graph() const { return *graph_; }
  const VelocityModel& model() const { return *model_; }
  /// Gradients of the trainable group, ordered like parameters(group).
  std::vector<Array> gradients() const;

 private:
  struct Leaves {
    diff::Var weight, bias;
    std::optional<diff::Var> down, up;
  };
  diff::Graph* graph_;
  const VelocityModel* model_;
  std::optional<ParamGroup> trainable_;
  bool adapters_on_;
  std::vector<Leaves> leaves_;
};

}  // namespace epo::flow
