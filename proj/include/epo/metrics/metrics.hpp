#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "epo/diffcore/array.hpp"
#include "epo/energy/potential.hpp"

namespace epo::metrics {

using diff::Array;

/// Additive smoothing applied to every bin before normalization.
inline constexpr double kHistogramSmoothing = 1e-12;

struct HistogramSpec {
  std::vector<double> lo, hi;
  std::vector<std::size_t> bins;
  /// Periodic dimensions wrap into [-pi, pi) before binning.
  std::vector<bool> periodic;

  std::size_t dim() const { return bins.size(); }
  std::size_t total_bins() const;
  void validate() const;
  double bin_center(std::size_t axis, std::size_t i) const;
  double bin_width(std::size_t axis) const { return (hi[axis] - lo[axis]) / static_cast<double>(bins[axis]); }

  static HistogramSpec uniform(const energy::Box& box, std::size_t bins_per_dim, bool periodic = false);
};

struct Histogram {
  std::vector<double> counts;  // flat, axis 0 slowest
  std::size_t total = 0;
  /// Samples that fell outside non-periodic bounds and were clamped.
  std::size_t out_of_bounds = 0;
};

/// Counts of samples [n x d] per bin; out-of-bounds samples land in edge bins.
Histogram histogram(const Array& samples, const HistogramSpec& spec);

/// Natural-log Jensen-Shannon divergence of two unnormalized bin vectors,
/// after adding kHistogramSmoothing to every bin. Symmetric bit-for-bit.
double jsd(std::span<const double> a, std::span<const double> b);

struct JsdResult {
  double value = 0.0;
  std::vector<std::string> warnings;
};

/// JSD between the histograms of two sample sets; value in [0, ln 2].
JsdResult jsd_hist(const Array& a, const Array& b, const HistogramSpec& spec);

/// Bin probabilities of the Boltzmann density of `p` (midpoint rule with
/// `sub` points per bin and axis).
std::vector<double> oracle_bin_masses(const energy::Potential& p, const HistogramSpec& spec, std::size_t sub = 16);

/// W2 between two 1-D samples via the quantile coupling. Unequal sizes
/// compare the smaller sample against interpolated quantiles of the larger.
double w2_1d(std::span<const double> a, std::span<const double> b);

/// Closed-form W2 between Gaussians N(mu1, S1) and N(mu2, S2).
double w2_gauss(std::span<const double> mu1, const Array& cov1, std::span<const double> mu2, const Array& cov2);

struct Moments {
  std::vector<double> mean;
  Array covariance;
};
Moments sample_moments(const Array& samples);

struct FreeEnergySurface {
  HistogramSpec spec;
  std::vector<double> values;  // kT units scaled by kT, min is 0
  double cap = 0.0;            // value written into empty bins
  double kT = 1.0;
};

/// -kT log(density) per bin, shifted so the minimum is 0; empty bins get
/// max finite value + 2 kT. Requires d in {1, 2}.
FreeEnergySurface fes_grid(const Array& samples, const HistogramSpec& spec, double kT);

/// Fraction of samples (coordinate `axis`) in each cell cut by ascending
/// `boundaries`. The weights sum to exactly 1.
std::vector<double> mode_masses(const Array& samples, std::span<const double> boundaries, std::size_t axis = 0);

struct TicaModel {
  std::size_t lag = 1;
  std::vector<double> mean;
  Array whitening;               // C0^{-1/2}
  Array unwhitening;             // C0^{1/2}
  Array components;              // [d x k], columns in original coordinates
  std::vector<double> eigenvalues;  // descending

  /// Projection of rows of x onto the components.
  Array transform(const Array& x) const;
  /// Maps projections back to centered coordinates (exact when k = d).
  Array inverse_transform(const Array& y) const;
};

struct TicaResult {
  TicaModel model;
  Array projected;
};

/// Time-lagged independent component analysis with symmetrized covariances.
TicaResult tica(const Array& trajectory, std::size_t lag, std::size_t n_components);

}  // namespace epo::metrics
