#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "epo/diffcore/array.hpp"

namespace epo::diff {

using NodeId = std::size_t;

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Affine,
  Tanh,
  Sigmoid,
  LogSigmoid,
  Sum,
  Mean,
  RowMean,
  SquaredError,
  LogSumExp,
  Concat,
  Slice,
  Gather,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Array& value() const;
  const Array& grad() const;
};

/// Append-only tape. Nodes are created in evaluation order, so the tape
/// order is a topological order and backward walks it in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Array value, bool requires_grad = false, std::string name = {});
  Var constant(Array value) { return leaf(std::move(value), false); }

  const Array& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient slot of a node; zeros if the node does not require grad or
  /// backward has not reached it.
  const Array& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const std::string& name(Var v) const { return nodes_.at(v.id).name; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode accumulation from a scalar root into every node that
  /// requires grad. Gradients from earlier backward calls are cleared.
  void backward(Var root);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> inputs;
    Array value;
    Array grad;
    bool requires_grad = false;
    double scalar = 0.0;
    std::vector<std::size_t> index;
    std::string name;
  };

  Var push(Op op, std::vector<NodeId> inputs, Array value, double scalar = 0.0,
           std::vector<std::size_t> index = {});
  void propagate(const Node& node);
  Array& grad_slot(NodeId id);

  std::vector<Node> nodes_;

  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var scale(Var, double);
  friend Var matmul(Var, Var);
  friend Var affine(Var, Var, Var);
  friend Var tanh(Var);
  friend Var sigmoid(Var);
  friend Var log_sigmoid(Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var row_mean(Var);
  friend Var squared_error(Var, Var);
  friend Var logsumexp(Var);
  friend Var concat(std::span<const Var>);
  friend Var slice(Var, std::size_t, std::size_t);
  friend Var gather(Var, std::span<const std::size_t>);
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var affine(Var x, Var w, Var bias);
Var tanh(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
/// Sum / mean of every element; scalar result.
Var sum(Var a);
Var mean(Var a);
/// Mean along the last axis of a [B x n] matrix; result has shape [B].
Var row_mean(Var a);
/// Elementwise (a - b)^2.
Var squared_error(Var a, Var b);
/// Stable log-sum-exp over all elements; scalar result.
Var logsumexp(Var a);
/// Concatenate along the last axis. Rank-2 inputs must share a row count.
Var concat(std::span<const Var> parts);
/// Elements [begin, end) of a rank-1 array.
Var slice(Var a, std::size_t begin, std::size_t end);
/// out[i] = a[index[i]] for a rank-1 array.
Var gather(Var a, std::span<const std::size_t> index);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

}  // namespace epo::diff
