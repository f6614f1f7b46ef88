#include "epo/diffcore/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace epo::diff {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) throw ShapeError("array shape must have at least one dimension");
  std::size_t n = 1;
  for (auto s : shape) {
    if (s == 0) throw ShapeError("array dimensions must be positive, got " + to_string(shape));
    n *= s;
  }
  return n;
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <class F>
Array map(const Array& a, F f) {
  Array out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Array zip(const Array& a, const Array& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Array out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("array data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

Array Array::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Array(Shape{n}, std::move(v));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Array(Shape{rows, cols}, std::move(v));
}

Array Array::identity(std::size_t n) {
  Array out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

double Array::item() const {
  if (!is_scalar()) throw ShapeError("item() on non-scalar array " + to_string(shape_));
  return data_[0];
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) mismatch(op, a.shape(), b.shape());
}

Array add(const Array& a, const Array& b) { return zip(a, b, "add", std::plus<>{}); }
Array sub(const Array& a, const Array& b) { return zip(a, b, "subtract", std::minus<>{}); }
Array mul(const Array& a, const Array& b) { return zip(a, b, "multiply", std::multiplies<>{}); }
Array scale(const Array& a, double c) {
  return map(a, [c](double v) { return c * v; });
}

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Array out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Array matmul_tn(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) mismatch("matmul_tn", a.shape(), b.shape());
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Array out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[p * m + i];
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Array matmul_nt(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) mismatch("matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Array out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += pa[i * k + p] * pb[j * k + p];
      po[i * n + j] = acc;
    }
  }
  return out;
}

Array affine(const Array& x, const Array& w, const Array& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows()) mismatch("affine", x.shape(), w.shape());
  if (bias.size() != w.cols()) mismatch("affine bias", bias.shape(), Shape{w.cols()});
  Array out = matmul(x, w);
  const std::size_t n = out.cols();
  auto po = out.data();
  auto pb = bias.data();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) po[i * n + j] += pb[j];
  return out;
}

Array tanh(const Array& a) {
  return map(a, [](double v) { return std::tanh(v); });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }

Array sigmoid(const Array& a) {
  return map(a, [](double v) { return sigmoid(v); });
}

Array log_sigmoid(const Array& a) {
  return map(a, [](double v) { return log_sigmoid(v); });
}

double logsumexp(std::span<const double> a) {
  if (a.empty()) throw ShapeError("logsumexp of an empty list");
  const double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : a) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace epo::diff
