#pragma once

#include <vector>

#include "epo/diffcore/array.hpp"

namespace epo::metrics {

using diff::Array;

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Array vectors;               // columns are unit eigenvectors
};

/// Cyclic Jacobi rotations for a small symmetric matrix.
SymmetricEigen jacobi_eigen(const Array& symmetric, double tol = 1e-14, int max_sweeps = 100);

/// V diag(f(lambda)) V^T.
template <class F>
Array spectral_map(const SymmetricEigen& e, F f) {
  const std::size_t n = e.values.size();
  Array out({n, n});
  for (std::size_t k = 0; k < n; ++k) {
    const double fk = f(e.values[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += e.vectors(i, k) * fk * e.vectors(j, k);
  }
  return out;
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues in
/// [-tol, 0) are clamped to zero; anything more negative throws.
Array sqrtm_psd(const Array& symmetric, double tol = 1e-10);

Array transpose(const Array& a);

}  // namespace epo::metrics
