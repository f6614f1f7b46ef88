#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "epo/diffcore/array.hpp"

namespace epo::testing {

/// Largest relative error between an analytic gradient and central
/// differences of `f` around `x`. Components where both are below `floor`
/// are compared on the absolute scale of `floor`.
inline double max_fd_error(const std::function<double(const diff::Array&)>& f, const diff::Array& x,
                           const diff::Array& analytic, double h = 1e-4, double floor = 1e-3) {
  double worst = 0.0;
  diff::Array probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = f(probe);
    probe[i] = keep - h;
    const double down = f(probe);
    probe[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

}  // namespace epo::testing
