#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epo/diffcore/array.hpp"
#include "epo/energy/potential.hpp"

namespace epo::energy {

using diff::Array;

struct GridSpec {
  Box bounds;
  /// Node count per dimension (>= 2).
  std::vector<std::size_t> points;
};

/// Normalized Boltzmann density exp(-E/kT)/Z sampled on a regular grid.
/// Non-periodic grids include both end nodes and integrate with the
/// trapezoid rule; periodic grids drop the duplicated end node.
class DensityGrid {
 public:
  DensityGrid(GridSpec spec, bool periodic, std::vector<double> density);

  const GridSpec& spec() const { return spec_; }
  bool periodic() const { return periodic_; }
  std::size_t dim() const { return spec_.points.size(); }
  const std::vector<double>& density() const { return density_; }
  double spacing(std::size_t axis) const;
  double coordinate(std::size_t axis, std::size_t i) const;
  /// Quadrature weight of a flat node index (includes cell volume).
  double weight(std::size_t flat) const;
  double integral() const;

  /// Masses of the cells cut by `boundaries` (ascending) along axis 0.
  std::vector<double> mode_masses(std::span<const double> boundaries) const;
  /// Marginal density along axis 0.
  std::vector<double> marginal0() const;

 private:
  GridSpec spec_;
  bool periodic_;
  std::vector<double> density_;
};

class UnnormalizableDensity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground-truth density of p on a grid. Requires d <= 2. Rejects
/// non-periodic grids whose outermost cell layer carries more than 1e-6 of
/// the mass.
DensityGrid boltzmann_oracle(const Potential& p, const GridSpec& grid);

struct MhConfig {
  std::size_t n = 10000;
  double step = 0.5;
  std::size_t burn_in = 1000;
  std::size_t thinning = 10;
  std::uint64_t seed = 0;
  /// Starting state; empty means the center of the default domain.
  std::vector<double> start;
};

struct MhResult {
  Array samples;  // [n x d]
  double acceptance_rate = 0.0;
  std::vector<std::string> warnings;
};

/// Random-walk Metropolis targeting exp(-E/kT). Deterministic given seed.
/// Periodic potentials are wrapped into [-pi, pi).
MhResult mh_sample(const Potential& p, const MhConfig& cfg);

struct RankedEnsemble {
  Array samples;                   // [K x d], original order
  std::vector<double> energies;    // original order
  std::vector<std::size_t> order;  // 0-based: order[0] is the lowest energy

  std::size_t size() const { return energies.size(); }
  /// Sample of rank k (0 = best).
  std::span<const double> ranked(std::size_t k) const { return samples.row(order[k]); }
};

/// Stable ascending sort of energies. Throws std::invalid_argument naming the
/// first non-finite energy.
RankedEnsemble rank_by_energy(Array samples, std::vector<double> energies);
RankedEnsemble rank_by_energy(const Potential& p, Array samples);

std::vector<double> energies_of(const Potential& p, const Array& samples);

}  // namespace epo::energy
