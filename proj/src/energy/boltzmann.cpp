#include "epo/energy/boltzmann.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "epo/common/random.hpp"

namespace epo::energy {

namespace {

std::size_t total_points(const GridSpec& g) {
  std::size_t n = 1;
  for (auto p : g.points) n *= p;
  return n;
}

void unflatten(std::size_t flat, const std::vector<std::size_t>& points, std::vector<std::size_t>& idx) {
  idx.resize(points.size());
  for (std::size_t a = points.size(); a-- > 0;) {
    idx[a] = flat % points[a];
    flat /= points[a];
  }
}

double wrap_angle(double v) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  v = std::fmod(v + std::numbers::pi, two_pi);
  if (v < 0.0) v += two_pi;
  return v - std::numbers::pi;
}

}  // namespace

DensityGrid::DensityGrid(GridSpec spec, bool periodic, std::vector<double> density)
    : spec_(std::move(spec)), periodic_(periodic), density_(std::move(density)) {
  if (spec_.points.empty() || spec_.bounds.lo.size() != spec_.points.size() ||
      spec_.bounds.hi.size() != spec_.points.size()) {
    throw std::invalid_argument("grid: bounds and point counts must match in dimension");
  }
  for (std::size_t a = 0; a < spec_.points.size(); ++a) {
    if (spec_.points[a] < 2) throw std::invalid_argument("grid: need at least 2 points per dimension");
    if (!(spec_.bounds.hi[a] > spec_.bounds.lo[a])) throw std::invalid_argument("grid: empty bounds");
  }
  if (density_.size() != total_points(spec_)) throw std::invalid_argument("grid: density size mismatch");
}

double DensityGrid::spacing(std::size_t axis) const {
  const double span = spec_.bounds.hi[axis] - spec_.bounds.lo[axis];
  const auto n = static_cast<double>(spec_.points[axis]);
  return periodic_ ? span / n : span / (n - 1.0);
}

double DensityGrid::coordinate(std::size_t axis, std::size_t i) const {
  return spec_.bounds.lo[axis] + static_cast<double>(i) * spacing(axis);
}

double DensityGrid::weight(std::size_t flat) const {
  std::vector<std::size_t> idx;
  unflatten(flat, spec_.points, idx);
  double w = 1.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    double h = spacing(a);
    if (!periodic_ && (idx[a] == 0 || idx[a] + 1 == spec_.points[a])) h *= 0.5;
    w *= h;
  }
  return w;
}

double DensityGrid::integral() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < density_.size(); ++i) acc += density_[i] * weight(i);
  return acc;
}

std::vector<double> DensityGrid::marginal0() const {
  std::vector<double> m(spec_.points[0], 0.0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < density_.size(); ++i) {
    unflatten(i, spec_.points, idx);
    double w = 1.0;
    for (std::size_t a = 1; a < idx.size(); ++a) {
      double h = spacing(a);
      if (!periodic_ && (idx[a] == 0 || idx[a] + 1 == spec_.points[a])) h *= 0.5;
      w *= h;
    }
    m[idx[0]] += density_[i] * w;
  }
  return m;
}

std::vector<double> DensityGrid::mode_masses(std::span<const double> boundaries) const {
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw std::invalid_argument("mode_masses: boundaries must be ascending");
  }
  const auto m = marginal0();
  const double h = spacing(0);
  std::vector<double> masses(boundaries.size() + 1, 0.0);
  auto cell_of = [&](double x) {
    return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), x) - boundaries.begin());
  };
  if (periodic_) {
    for (std::size_t i = 0; i < m.size(); ++i) masses[cell_of(coordinate(0, i))] += m[i] * h;
    return masses;
  }
  for (std::size_t i = 0; i + 1 < m.size(); ++i) {
    const double xa = coordinate(0, i), xb = coordinate(0, i + 1);
    std::vector<double> cuts{xa};
    for (double b : boundaries)
      if (b > xa && b < xb) cuts.push_back(b);
    cuts.push_back(xb);
    auto interp = [&](double x) { return m[i] + (m[i + 1] - m[i]) * (x - xa) / (xb - xa); };
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double lo = cuts[k], hi = cuts[k + 1];
      masses[cell_of(0.5 * (lo + hi))] += 0.5 * (hi - lo) * (interp(lo) + interp(hi));
    }
  }
  return masses;
}

DensityGrid boltzmann_oracle(const Potential& p, const GridSpec& grid) {
  if (p.dim() > 2) throw std::invalid_argument("boltzmann_oracle: supports d <= 2");
  if (grid.points.size() != p.dim()) throw diff::ShapeError("boltzmann_oracle: grid dimension does not match potential");
  const std::size_t n = total_points(grid);
  DensityGrid shape_only(grid, p.periodic(), std::vector<double>(n, 0.0));

  std::vector<double> logw(n);
  std::vector<std::size_t> idx;
  std::vector<double> x(p.dim());
  for (std::size_t i = 0; i < n; ++i) {
    unflatten(i, grid.points, idx);
    for (std::size_t a = 0; a < idx.size(); ++a) x[a] = shape_only.coordinate(a, idx[a]);
    logw[i] = -p.energy(x) / p.kT();
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> dens(n);
  for (std::size_t i = 0; i < n; ++i) dens[i] = std::exp(logw[i] - top);
  DensityGrid unnorm(grid, p.periodic(), dens);
  const double z = unnorm.integral();
  for (double& v : dens) v /= z;
  DensityGrid out(grid, p.periodic(), std::move(dens));

  if (!p.periodic()) {
    double edge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      unflatten(i, grid.points, idx);
      bool outer = false;
      for (std::size_t a = 0; a < idx.size(); ++a) outer = outer || idx[a] <= 1 || idx[a] + 2 >= grid.points[a];
      if (outer) edge += out.density()[i] * out.weight(i);
    }
    if (edge > 1e-6) {
      std::ostringstream os;
      os << "boltzmann_oracle: " << edge << " of the mass lies at the grid edge; widen the bounds";
      throw UnnormalizableDensity(os.str());
    }
  }
  return out;
}

MhResult mh_sample(const Potential& p, const MhConfig& cfg) {
  if (cfg.n == 0) throw std::invalid_argument("mh_sample: n must be >= 1");
  if (cfg.thinning == 0) throw std::invalid_argument("mh_sample: thinning must be >= 1");
  if (!(cfg.step > 0.0)) throw std::invalid_argument("mh_sample: proposal step must be positive");
  const std::size_t d = p.dim();
  std::vector<double> x = cfg.start;
  if (x.empty()) {
    const Box box = p.default_domain();
    x.resize(d);
    for (std::size_t a = 0; a < d; ++a) x[a] = 0.5 * (box.lo[a] + box.hi[a]);
  }
  if (x.size() != d) throw diff::ShapeError("mh_sample: start state has the wrong dimension");

  Rng rng = make_stream(cfg.seed, 0x3c3c);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double e = p.energy(x);
  std::vector<double> y(d);
  MhResult out{Array({cfg.n, d}), 0.0, {}};
  std::size_t accepted = 0, recorded = 0;
  const std::size_t total = cfg.burn_in + cfg.n * cfg.thinning;
  for (std::size_t s = 0; s < total; ++s) {
    for (std::size_t a = 0; a < d; ++a) {
      y[a] = x[a] + cfg.step * normal(rng);
      if (p.periodic()) y[a] = wrap_angle(y[a]);
    }
    const double ey = p.energy(y);
    const double log_ratio = -(ey - e) / p.kT();
    const bool accept = log_ratio >= 0.0 || unit(rng) < std::exp(log_ratio);
    if (accept) {
      x = y;
      e = ey;
    }
    if (s >= cfg.burn_in) {
      accepted += accept ? 1 : 0;
      const std::size_t k = s - cfg.burn_in + 1;
      if (k % cfg.thinning == 0) std::copy(x.begin(), x.end(), out.samples.row(recorded++).begin());
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.n * cfg.thinning);
  if (out.acceptance_rate < 0.05 || out.acceptance_rate > 0.95) {
    std::ostringstream os;
    os << "mh_sample: acceptance rate " << out.acceptance_rate << " outside [0.05, 0.95]; adjust the proposal step";
    out.warnings.push_back(os.str());
  }
  return out;
}

std::vector<double> energies_of(const Potential& p, const Array& samples) {
  std::vector<double> e(samples.rows());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = p.energy(samples.row(i));
  return e;
}

RankedEnsemble rank_by_energy(Array samples, std::vector<double> energies) {
  if (samples.rows() != energies.size()) throw std::invalid_argument("rank_by_energy: sample and energy counts differ");
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (!std::isfinite(energies[i])) {
      throw std::invalid_argument("rank_by_energy: non-finite energy at index " + std::to_string(i));
    }
  }
  std::vector<std::size_t> order(energies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return energies[a] < energies[b]; });
  return {std::move(samples), std::move(energies), std::move(order)};
}

RankedEnsemble rank_by_energy(const Potential& p, Array samples) {
  auto e = energies_of(p, samples);
  return rank_by_energy(std::move(samples), std::move(e));
}

}  // namespace epo::energy
