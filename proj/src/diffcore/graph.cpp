#include "epo/diffcore/graph.hpp"

#include <algorithm>
#include <cmath>

namespace epo::diff {

const Array& Var::value() const { return graph->value(*this); }
const Array& Var::grad() const { return graph->grad(*this); }

namespace {

Graph& owner(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw std::invalid_argument("vars belong to different graphs");
  return *a.graph;
}

void accumulate(Array& dst, const Array& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var Graph::leaf(Array value, bool requires_grad, std::string name) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(Op op, std::vector<NodeId> inputs, Array value, double scalar, std::vector<std::size_t> index) {
  Node n;
  n.op = op;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](NodeId i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.scalar = scalar;
  n.index = std::move(index);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Array& Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.shape() != n.value.shape()) {
    // Never touched by backward: expose a zero slot of the right shape.
    const_cast<Node&>(n).grad = Array(n.value.shape());
  }
  return n.grad;
}

Array& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Array(n.value.shape());
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::invalid_argument("backward: root belongs to another graph");
  const Node& r = nodes_.at(root.id);
  if (!r.value.is_scalar()) {
    throw ShapeError("backward: root must be scalar-valued, got shape " + to_string(r.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Array(n.value.shape());
  nodes_[root.id].grad[0] = 1.0;
  for (std::size_t k = root.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!n.requires_grad || n.op == Op::Leaf) continue;
    propagate(n);
  }
}

void Graph::propagate(const Node& n) {
  const Array& g = n.grad;
  auto needs = [&](std::size_t slot) { return nodes_[n.inputs[slot]].requires_grad; };
  auto in = [&](std::size_t slot) -> const Array& { return nodes_[n.inputs[slot]].value; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (needs(0)) accumulate(grad_slot(n.inputs[0]), g);
      if (needs(1)) accumulate(grad_slot(n.inputs[1]), g);
      break;
    case Op::Sub:
      if (needs(0)) accumulate(grad_slot(n.inputs[0]), g);
      if (needs(1)) accumulate(grad_slot(n.inputs[1]), diff::scale(g, -1.0));
      break;
    case Op::Mul:
      // Inputs may alias (x * x); each slot accumulates its own term.
      if (needs(0)) accumulate(grad_slot(n.inputs[0]), diff::mul(g, in(1)));
      if (needs(1)) accumulate(grad_slot(n.inputs[1]), diff::mul(g, in(0)));
      break;
    case Op::Scale:
      accumulate(grad_slot(n.inputs[0]), diff::scale(g, n.scalar));
      break;
    case Op::MatMul:
      if (needs(0)) accumulate(grad_slot(n.inputs[0]), matmul_nt(g, in(1)));
      if (needs(1)) accumulate(grad_slot(n.inputs[1]), matmul_tn(in(0), g));
      break;
    case Op::Affine: {
      if (needs(0)) accumulate(grad_slot(n.inputs[0]), matmul_nt(g, in(1)));
      if (needs(1)) accumulate(grad_slot(n.inputs[1]), matmul_tn(in(0), g));
      if (needs(2)) {
        Array& gb = grad_slot(n.inputs[2]);
        const std::size_t cols = g.cols();
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < cols; ++j) gb[j] += g(i, j);
      }
      break;
    }
    case Op::Tanh: {
      Array& dst = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Sigmoid: {
      Array& dst = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::LogSigmoid: {
      Array& dst = grad_slot(n.inputs[0]);
      const Array& x = in(0);
      // d/dx log sigma(x) = sigma(-x)
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * diff::sigmoid(-x[i]);
      break;
    }
    case Op::Sum: {
      Array& dst = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0];
      break;
    }
    case Op::Mean: {
      Array& dst = grad_slot(n.inputs[0]);
      const double w = g[0] / static_cast<double>(dst.size());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w;
      break;
    }
    case Op::RowMean: {
      Array& dst = grad_slot(n.inputs[0]);
      const std::size_t cols = dst.cols();
      for (std::size_t i = 0; i < dst.rows(); ++i) {
        const double w = g[i] / static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) dst(i, j) += w;
      }
      break;
    }
    case Op::SquaredError: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (needs(0)) {
        Array& dst = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += 2.0 * g[i] * (a[i] - b[i]);
      }
      if (needs(1)) {
        Array& dst = grad_slot(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= 2.0 * g[i] * (a[i] - b[i]);
      }
      break;
    }
    case Op::LogSumExp: {
      Array& dst = grad_slot(n.inputs[0]);
      const Array& a = in(0);
      const double lse = n.value[0];
      for (std::size_t i = 0; i < a.size(); ++i) dst[i] += g[0] * std::exp(a[i] - lse);
      break;
    }
    case Op::Concat: {
      const std::size_t out_cols = n.value.cols();
      const std::size_t rows = n.value.rows();
      std::size_t offset = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        const std::size_t c = in(s).cols();
        if (needs(s)) {
          Array& dst = grad_slot(n.inputs[s]);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += g[i * out_cols + offset + j];
        }
        offset += c;
      }
      break;
    }
    case Op::Slice: {
      Array& dst = grad_slot(n.inputs[0]);
      const std::size_t begin = n.index[0];
      for (std::size_t i = 0; i < g.size(); ++i) dst[begin + i] += g[i];
      break;
    }
    case Op::Gather: {
      Array& dst = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) dst[n.index[i]] += g[i];
      break;
    }
  }
}

Var add(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.push(Op::Add, {a.id, b.id}, diff::add(a.value(), b.value()));
}

Var sub(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.push(Op::Sub, {a.id, b.id}, diff::sub(a.value(), b.value()));
}

Var mul(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.push(Op::Mul, {a.id, b.id}, diff::mul(a.value(), b.value()));
}

Var scale(Var a, double c) { return a.graph->push(Op::Scale, {a.id}, diff::scale(a.value(), c), c); }

Var matmul(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.push(Op::MatMul, {a.id, b.id}, diff::matmul(a.value(), b.value()));
}

Var affine(Var x, Var w, Var bias) {
  Graph& g = owner(x, w);
  owner(w, bias);
  return g.push(Op::Affine, {x.id, w.id, bias.id}, diff::affine(x.value(), w.value(), bias.value()));
}

Var tanh(Var a) { return a.graph->push(Op::Tanh, {a.id}, diff::tanh(a.value())); }
Var sigmoid(Var a) { return a.graph->push(Op::Sigmoid, {a.id}, diff::sigmoid(a.value())); }
Var log_sigmoid(Var a) { return a.graph->push(Op::LogSigmoid, {a.id}, diff::log_sigmoid(a.value())); }

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.graph->push(Op::Sum, {a.id}, Array::scalar(acc));
}

Var mean(Var a) {
  const Array& v = a.value();
  double acc = 0.0;
  for (double x : v.data()) acc += x;
  return a.graph->push(Op::Mean, {a.id}, Array::scalar(acc / static_cast<double>(v.size())));
}

Var row_mean(Var a) {
  const Array& v = a.value();
  if (v.rank() != 2) throw ShapeError("row_mean: expected a matrix, got " + to_string(v.shape()));
  Array out(Shape{v.rows()});
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double acc = 0.0;
    for (double x : v.row(i)) acc += x;
    out[i] = acc / static_cast<double>(v.cols());
  }
  return a.graph->push(Op::RowMean, {a.id}, std::move(out));
}

Var squared_error(Var a, Var b) {
  Graph& g = owner(a, b);
  Array d = diff::sub(a.value(), b.value());
  for (double& x : d.data()) x *= x;
  return g.push(Op::SquaredError, {a.id, b.id}, std::move(d));
}

Var logsumexp(Var a) { return a.graph->push(Op::LogSumExp, {a.id}, Array::scalar(diff::logsumexp(a.value().data()))); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  Graph* g = parts[0].graph;
  const Array& first = parts[0].value();
  const bool matrix = first.rank() == 2;
  const std::size_t rows = first.rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    owner(parts[0], p);
    const Array& v = p.value();
    if (v.rank() != first.rank() || v.rows() != rows) throw ShapeError("concat: shape mismatch " + to_string(first.shape()) + " vs " + to_string(v.shape()));
    cols += v.cols();
  }
  Array out(matrix ? Shape{rows, cols} : Shape{cols});
  std::size_t offset = 0;
  std::vector<NodeId> ids;
  for (const Var& p : parts) {
    const Array& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * cols + offset + j] = v[i * c + j];
    offset += c;
    ids.push_back(p.id);
  }
  return g->push(Op::Concat, std::move(ids), std::move(out));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  const Array& v = a.value();
  if (v.rank() != 1 || begin >= end || end > v.size()) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for shape " +
                     to_string(v.shape()));
  }
  std::vector<double> out(v.data().begin() + static_cast<std::ptrdiff_t>(begin),
                          v.data().begin() + static_cast<std::ptrdiff_t>(end));
  return a.graph->push(Op::Slice, {a.id}, Array::vector(std::move(out)), 0.0, {begin});
}

Var gather(Var a, std::span<const std::size_t> index) {
  const Array& v = a.value();
  if (v.rank() != 1 || index.empty()) throw ShapeError("gather: expected a non-empty index into a vector");
  std::vector<double> out;
  out.reserve(index.size());
  for (std::size_t i : index) {
    if (i >= v.size()) throw ShapeError("gather: index " + std::to_string(i) + " out of range for shape " + to_string(v.shape()));
    out.push_back(v[i]);
  }
  return a.graph->push(Op::Gather, {a.id}, Array::vector(std::move(out)), 0.0, {index.begin(), index.end()});
}

}  // namespace epo::diff
