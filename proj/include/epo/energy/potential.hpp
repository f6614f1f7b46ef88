#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace epo::energy {

/// E(x) = a (x^2 - 1)^2 + b x
struct DoubleWell {
  double a = 2.0;
  double b = 0.0;
  friend bool operator==(const DoubleWell&, const DoubleWell&) = default;
};

/// E(x) = -kT log sum_k w_k N(x; mu_k, Sigma_k)
struct GaussianMixture {
  std::size_t dim = 1;
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  /// Row-major dim x dim covariances.
  std::vector<std::vector<double>> covariances;
  friend bool operator==(const GaussianMixture&, const GaussianMixture&) = default;
};

/// E(x, y) = sum_k A_k exp(a_k (x - x0_k)^2 + b_k (x - x0_k)(y - y0_k) + c_k (y - y0_k)^2)
struct MuellerBrown {
  std::array<double, 4> A{-200.0, -100.0, -170.0, 15.0};
  std::array<double, 4> a{-1.0, -1.0, -6.5, 0.7};
  std::array<double, 4> b{0.0, 0.0, 11.0, 0.6};
  std::array<double, 4> c{-10.0, -10.0, -6.5, 0.7};
  std::array<double, 4> x0{1.0, 0.0, -0.5, -1.0};
  std::array<double, 4> y0{0.0, 0.5, 1.5, 1.0};
  friend bool operator==(const MuellerBrown&, const MuellerBrown&) = default;
};

/// E(x) = sum_d sum_m c[d][m] cos((m + 1) x_d); period 2*pi in every dimension.
struct PeriodicTorsion {
  std::vector<std::vector<double>> coefficients;
  friend bool operator==(const PeriodicTorsion&, const PeriodicTorsion&) = default;
};

using PotentialKind = std::variant<DoubleWell, GaussianMixture, MuellerBrown, PeriodicTorsion>;

/// Axis-aligned box; one (lo, hi) pair per dimension.
struct Box {
  std::vector<double> lo, hi;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Analytic energy with a temperature. Immutable after construction.
class Potential {
 public:
  Potential(PotentialKind kind, double kT = 1.0);

  std::size_t dim() const { return dim_; }
  double kT() const { return kT_; }
  bool periodic() const { return std::holds_alternative<PeriodicTorsion>(kind_); }
  const PotentialKind& kind() const { return kind_; }
  std::string kind_name() const;

  /// Throws diff::ShapeError on dimension mismatch.
  double energy(std::span<const double> x) const;
  double operator()(std::span<const double> x) const { return energy(x); }

  /// Bounds covering every mode with negligible tail mass.
  Box default_domain() const;
  /// Mode split points along the first coordinate.
  std::vector<double> default_partition() const;

  friend bool operator==(const Potential&, const Potential&) = default;

 private:
  struct MixtureCache {
    std::vector<std::vector<double>> chol;  // lower-triangular factors
    std::vector<double> log_norm;            // log w_k - log((2 pi)^(d/2) |Sigma_k|^(1/2))
    friend bool operator==(const MixtureCache&, const MixtureCache&) = default;
  };

  PotentialKind kind_;
  double kT_;
  std::size_t dim_;
  MixtureCache mixture_;
};

/// Named presets: double-well, tilted-double-well, gaussian, gaussian-mixture,
/// mueller-brown, periodic-torsion.
Potential make_preset(std::string_view name, double kT = 1.0);
std::vector<std::string> preset_names();

}  // namespace epo::energy
