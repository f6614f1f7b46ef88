#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace epo::diff {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles. Rank 1 and rank 2 are the only ranks
/// the ops below produce; a scalar is a rank-1 array of length 1.
class Array {
 public:
  Array() : shape_{1}, data_(1, 0.0) {}
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double v) { return Array(Shape{1}, {v}); }
  static Array vector(std::vector<double> v);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Array identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.back(); }
  bool is_scalar() const { return data_.size() == 1; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  double item() const;
  bool all_finite() const;

  friend bool operator==(const Array& a, const Array& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain kernels shared by the tape and by the no-gradient fast paths. Each
// output row of matmul/affine depends only on the matching input row, so
// results do not depend on how a batch is partitioned.

void require_same_shape(const Array& a, const Array& b, const char* op);

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scale(const Array& a, double c);
/// [m x k] * [k x n]
Array matmul(const Array& a, const Array& b);
/// a^T * b for a [k x m], b [k x n]
Array matmul_tn(const Array& a, const Array& b);
/// a * b^T for a [m x k], b [n x k]
Array matmul_nt(const Array& a, const Array& b);
/// x [B x in] * w [in x out] + bias [out], bias broadcast over rows.
Array affine(const Array& x, const Array& w, const Array& bias);
Array tanh(const Array& a);
Array sigmoid(const Array& a);
Array log_sigmoid(const Array& a);

double sigmoid(double x);
double log_sigmoid(double x);
double logsumexp(std::span<const double> a);

}  // namespace epo::diff
