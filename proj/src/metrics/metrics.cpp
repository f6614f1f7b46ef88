#include "epo/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "epo/metrics/linalg.hpp"

namespace epo::metrics {

namespace {

double wrap_angle(double v) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  v = std::fmod(v + std::numbers::pi, two_pi);
  if (v < 0.0) v += two_pi;
  return v - std::numbers::pi;
}

void require_rows(const Array& samples, std::size_t dim, const char* what) {
  if (samples.rank() != 2 || samples.cols() != dim) {
    throw diff::ShapeError(std::string(what) + ": samples of shape " + diff::to_string(samples.shape()) +
                           " do not match dimension " + std::to_string(dim));
  }
}

}  // namespace

std::size_t HistogramSpec::total_bins() const {
  std::size_t n = 1;
  for (auto b : bins) n *= b;
  return n;
}

void HistogramSpec::validate() const {
  if (bins.empty() || lo.size() != bins.size() || hi.size() != bins.size()) {
    throw std::invalid_argument("histogram: bounds and bin counts must agree in dimension");
  }
  for (std::size_t a = 0; a < bins.size(); ++a) {
    if (bins[a] < 2) throw std::invalid_argument("histogram: need at least 2 bins per dimension");
    if (!std::isfinite(lo[a]) || !std::isfinite(hi[a]) || !(hi[a] > lo[a])) {
      throw std::invalid_argument("histogram: bounds must be finite and non-empty");
    }
  }
  if (!periodic.empty() && periodic.size() != bins.size()) {
    throw std::invalid_argument("histogram: periodic flags must match the dimension");
  }
}

double HistogramSpec::bin_center(std::size_t axis, std::size_t i) const {
  return lo[axis] + (static_cast<double>(i) + 0.5) * bin_width(axis);
}

HistogramSpec HistogramSpec::uniform(const energy::Box& box, std::size_t bins_per_dim, bool periodic) {
  const std::size_t d = box.lo.size();
  return HistogramSpec{box.lo, box.hi, std::vector<std::size_t>(d, bins_per_dim), std::vector<bool>(d, periodic)};
}

Histogram histogram(const Array& samples, const HistogramSpec& spec) {
  spec.validate();
  require_rows(samples, spec.dim(), "histogram");
  Histogram h{std::vector<double>(spec.total_bins(), 0.0), samples.rows(), 0};
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    std::size_t flat = 0;
    bool clamped = false;
    for (std::size_t a = 0; a < spec.dim(); ++a) {
      double v = samples(r, a);
      const bool per = !spec.periodic.empty() && spec.periodic[a];
      if (per) v = wrap_angle(v);
      const double pos = std::floor((v - spec.lo[a]) / spec.bin_width(a));
      std::ptrdiff_t i = std::isfinite(pos) ? static_cast<std::ptrdiff_t>(std::clamp(pos, -1.0, static_cast<double>(spec.bins[a])))
                                            : 0;
      const auto nb = static_cast<std::ptrdiff_t>(spec.bins[a]);
      if (i < 0 || i >= nb) {
        if (!per) clamped = true;
        i = std::clamp<std::ptrdiff_t>(i, 0, nb - 1);
      }
      flat = flat * spec.bins[a] + static_cast<std::size_t>(i);
    }
    h.counts[flat] += 1.0;
    if (clamped) ++h.out_of_bounds;
  }
  return h;
}

double jsd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("jsd: bin vectors must be non-empty and equal-sized");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i] + kHistogramSmoothing;
    sb += b[i] + kHistogramSmoothing;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = (a[i] + kHistogramSmoothing) / sa;
    const double q = (b[i] + kHistogramSmoothing) / sb;
    const double m = 0.5 * (p + q);
    acc += 0.5 * (p * std::log(p / m) + q * std::log(q / m));
  }
  return std::clamp(acc, 0.0, std::numbers::ln2);
}

JsdResult jsd_hist(const Array& a, const Array& b, const HistogramSpec& spec) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("jsd_hist: sample sets must be non-empty");
  const Histogram ha = histogram(a, spec), hb = histogram(b, spec);
  JsdResult r{jsd(ha.counts, hb.counts), {}};
  for (const auto* h : {&ha, &hb}) {
    if (h->out_of_bounds > 0) {
      r.warnings.push_back("jsd_hist: " + std::to_string(h->out_of_bounds) +
                           " samples outside the histogram bounds were counted in edge bins");
    }
  }
  return r;
}

std::vector<double> oracle_bin_masses(const energy::Potential& p, const HistogramSpec& spec, std::size_t sub) {
  spec.validate();
  if (spec.dim() != p.dim()) throw diff::ShapeError("oracle_bin_masses: histogram and potential dimensions differ");
  if (spec.dim() > 2) throw std::invalid_argument("oracle_bin_masses: supports d <= 2");
  const std::size_t d = spec.dim();
  std::vector<std::size_t> fine(d);
  for (std::size_t a = 0; a < d; ++a) fine[a] = spec.bins[a] * sub;
  std::size_t total = 1;
  for (auto f : fine) total *= f;

  std::vector<double> logw(total);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rest = i;
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t k = rest % fine[a];
      rest /= fine[a];
      x[a] = spec.lo[a] + (static_cast<double>(k) + 0.5) * (spec.hi[a] - spec.lo[a]) / static_cast<double>(fine[a]);
    }
    logw[i] = -p.energy(x) / p.kT();
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> masses(spec.total_bins(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rest = i, flat = 0, mult = 1;
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t k = rest % fine[a];
      rest /= fine[a];
      flat += (k / sub) * mult;
      mult *= spec.bins[a];
    }
    const double w = std::exp(logw[i] - top);
    masses[flat] += w;
    z += w;
  }
  for (double& m : masses) m /= z;
  return masses;
}

double w2_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w2_1d: samples must be non-empty");
  std::vector<double> small(a.begin(), a.end()), large(b.begin(), b.end());
  if (small.size() > large.size()) std::swap(small, large);
  std::sort(small.begin(), small.end());
  std::sort(large.begin(), large.end());
  const std::size_t n = small.size(), m = large.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double q;
    if (n == m) {
      q = large[i];
    } else {
      // Empirical quantile of `large` at level (i + 1/2)/n, with order
      // statistic j sitting at level (j + 1/2)/m.
      const double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(m) / static_cast<double>(n) - 0.5;
      if (pos <= 0.0) {
        q = large.front();
      } else if (pos >= static_cast<double>(m - 1)) {
        q = large.back();
      } else {
        const auto j = static_cast<std::size_t>(std::floor(pos));
        const double f = pos - static_cast<double>(j);
        q = large[j] + f * (large[j + 1] - large[j]);
      }
    }
    const double diff = small[i] - q;
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

double w2_gauss(std::span<const double> mu1, const Array& cov1, std::span<const double> mu2, const Array& cov2) {
  const std::size_t d = mu1.size();
  if (mu2.size() != d || cov1.shape() != diff::Shape{d, d} || cov2.shape() != diff::Shape{d, d}) {
    throw diff::ShapeError("w2_gauss: means and covariances must agree in dimension");
  }
  // Validate both inputs are PSD (eigenvalue >= -1e-10).
  for (const Array* c : {&cov1, &cov2}) {
    for (double l : jacobi_eigen(*c).values) {
      if (l < -1e-10) throw std::invalid_argument("w2_gauss: covariance is not positive semidefinite");
    }
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  const Array r2 = sqrtm_psd(cov2);
  const Array cross = sqrtm_psd(diff::matmul(diff::matmul(r2, cov1), r2));
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov1(i, i) + cov2(i, i) - 2.0 * cross(i, i);
  return std::sqrt(std::max(mean_term + trace, 0.0));
}

Moments sample_moments(const Array& samples) {
  if (samples.rank() != 2 || samples.rows() < 2) throw std::invalid_argument("sample_moments: need at least 2 rows");
  const std::size_t n = samples.rows(), d = samples.cols();
  Moments m{std::vector<double>(d, 0.0), Array({d, d})};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += samples(r, j);
  for (double& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.covariance(i, j) += (samples(r, i) - m.mean[i]) * (samples(r, j) - m.mean[j]);
  for (double& v : m.covariance.data()) v /= static_cast<double>(n - 1);
  return m;
}

FreeEnergySurface fes_grid(const Array& samples, const HistogramSpec& spec, double kT) {
  if (spec.dim() < 1 || spec.dim() > 2) throw std::invalid_argument("fes_grid: supports d in {1, 2}");
  if (!(kT > 0.0)) throw std::invalid_argument("fes_grid: kT must be positive");
  const Histogram h = histogram(samples, spec);
  if (h.total == 0) throw std::invalid_argument("fes_grid: histogram is empty");
  double volume = 1.0;
  for (std::size_t a = 0; a < spec.dim(); ++a) volume *= spec.bin_width(a);
  FreeEnergySurface f{spec, std::vector<double>(h.counts.size()), 0.0, kT};
  const double inf = std::numeric_limits<double>::infinity();
  double lo = inf, hi = -inf;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] > 0.0) {
      const double density = h.counts[i] / (static_cast<double>(h.total) * volume);
      f.values[i] = -kT * std::log(density);
      lo = std::min(lo, f.values[i]);
      hi = std::max(hi, f.values[i]);
    } else {
      f.values[i] = inf;
    }
  }
  f.cap = hi - lo + 2.0 * kT;
  for (double& v : f.values) v = std::isfinite(v) ? v - lo : f.cap;
  return f;
}

std::vector<double> mode_masses(const Array& samples, std::span<const double> boundaries, std::size_t axis) {
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw std::invalid_argument("mode_masses: boundaries must be ascending");
  }
  if (samples.rank() != 2 || axis >= samples.cols()) throw diff::ShapeError("mode_masses: axis out of range");
  const std::size_t n = samples.rows();
  std::vector<std::size_t> counts(boundaries.size() + 1, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const double v = samples(r, axis);
    ++counts[static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), v) - boundaries.begin())];
  }
  std::vector<double> w(counts.size(), 0.0);
  if (n == 0) return w;
  double partial = 0.0;
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    w[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
    partial += w[k];
  }
  // Last cell closes the sum so that summing in index order gives 1.
  w.back() = 1.0 - partial;
  return w;
}

Array TicaModel::transform(const Array& x) const {
  if (x.rank() != 2 || x.cols() != mean.size()) throw diff::ShapeError("tica transform: dimension mismatch");
  Array c = x;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) -= mean[j];
  return diff::matmul(c, components);
}

Array TicaModel::inverse_transform(const Array& y) const {
  // y = x_c W V_k  =>  x_c = y V_k^T W^{-1}.
  const std::size_t d = mean.size(), k = components.cols();
  if (y.rank() != 2 || y.cols() != k) throw diff::ShapeError("tica inverse_transform: dimension mismatch");
  const Array rotation = diff::matmul(unwhitening, components);  // C0^{1/2} W V_k = V_k
  Array vk_t({k, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) vk_t(j, i) = rotation(i, j);
  return diff::matmul(diff::matmul(y, vk_t), unwhitening);
}

TicaResult tica(const Array& trajectory, std::size_t lag, std::size_t n_components) {
  if (trajectory.rank() != 2) throw diff::ShapeError("tica: trajectory must be [T x d]");
  const std::size_t T = trajectory.rows(), d = trajectory.cols();
  if (lag == 0) throw std::invalid_argument("tica: lag must be positive");
  if (T <= lag + 2) throw std::invalid_argument("tica: trajectory must be longer than lag + 2");
  if (n_components == 0 || n_components > d) throw std::invalid_argument("tica: n_components must lie in [1, d]");
  const std::size_t n = T - lag;

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += trajectory(r, j) + trajectory(r + lag, j);
  for (double& m : mean) m /= 2.0 * static_cast<double>(n);

  Array c0({d, d}), ct({d, d});
  std::vector<double> a(d), b(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      a[j] = trajectory(r, j) - mean[j];
      b[j] = trajectory(r + lag, j) - mean[j];
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        c0(i, j) += a[i] * a[j] + b[i] * b[j];
        ct(i, j) += a[i] * b[j] + b[i] * a[j];
      }
  }
  const double norm = 2.0 * static_cast<double>(n);
  for (double& v : c0.data()) v /= norm;
  for (double& v : ct.data()) v /= norm;

  const auto e0 = jacobi_eigen(c0);
  const double top = e0.values.front();
  if (!(top > 0.0) || e0.values.back() < 1e-10 * top) {
    throw std::invalid_argument("tica: instantaneous covariance is rank-deficient; drop constant coordinates or add a "
                                "small diagonal regularization");
  }
  TicaModel m;
  m.lag = lag;
  m.mean = mean;
  m.whitening = spectral_map(e0, [](double l) { return 1.0 / std::sqrt(l); });
  m.unwhitening = spectral_map(e0, [](double l) { return std::sqrt(l); });
  const Array whitened = diff::matmul(diff::matmul(m.whitening, ct), m.whitening);
  const auto et = jacobi_eigen(whitened);
  Array vk({d, n_components});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < n_components; ++k) vk(i, k) = et.vectors(i, k);
  m.components = diff::matmul(m.whitening, vk);
  m.eigenvalues.assign(et.values.begin(), et.values.begin() + static_cast<std::ptrdiff_t>(n_components));

  TicaResult r{m, Array({1})};
  r.projected = r.model.transform(trajectory);
  return r;
}

}  // namespace epo::metrics
