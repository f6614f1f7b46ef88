#include "epo/energy/potential.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "epo/diffcore/array.hpp"

namespace epo::energy {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::size_t kind_dim(const PotentialKind& kind) {
  return std::visit(overloaded{[](const DoubleWell&) -> std::size_t { return 1; },
                               [](const GaussianMixture& g) { return g.dim; },
                               [](const MuellerBrown&) -> std::size_t { return 2; },
                               [](const PeriodicTorsion& p) { return p.coefficients.size(); }},
                    kind);
}

// Cholesky of a small SPD matrix; throws when not positive definite.
std::vector<double> cholesky(const std::vector<double>& m, std::size_t d) {
  std::vector<double> L(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= L[i * d + k] * L[j * d + k];
      if (i == j) {
        if (s <= 0.0) throw std::invalid_argument("gaussian-mixture: covariance is not positive definite");
        L[i * d + i] = std::sqrt(s);
      } else {
        L[i * d + j] = s / L[j * d + j];
      }
    }
  }
  return L;
}

}  // namespace

Potential::Potential(PotentialKind kind, double kT) : kind_(std::move(kind)), kT_(kT), dim_(kind_dim(kind_)) {
  if (!(kT_ > 0.0) || !std::isfinite(kT_)) throw std::invalid_argument("potential: kT must be positive");
  if (dim_ == 0) throw std::invalid_argument("potential: dimension must be positive");
  if (const auto* g = std::get_if<GaussianMixture>(&kind_)) {
    const std::size_t K = g->weights.size();
    if (K == 0 || g->means.size() != K || g->covariances.size() != K) {
      throw std::invalid_argument("gaussian-mixture: weights, means and covariances must have equal length");
    }
    double total = 0.0;
    for (double w : g->weights) {
      if (!(w > 0.0)) throw std::invalid_argument("gaussian-mixture: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("gaussian-mixture: weights must sum to 1");
    const double d = static_cast<double>(g->dim);
    for (std::size_t k = 0; k < K; ++k) {
      if (g->means[k].size() != g->dim || g->covariances[k].size() != g->dim * g->dim) {
        throw std::invalid_argument("gaussian-mixture: component " + std::to_string(k) + " has the wrong dimension");
      }
      auto L = cholesky(g->covariances[k], g->dim);
      double log_det = 0.0;
      for (std::size_t i = 0; i < g->dim; ++i) log_det += 2.0 * std::log(L[i * g->dim + i]);
      mixture_.chol.push_back(std::move(L));
      mixture_.log_norm.push_back(std::log(g->weights[k]) - 0.5 * d * std::log(2.0 * std::numbers::pi) -
                                  0.5 * log_det);
    }
  }
  if (const auto* p = std::get_if<PeriodicTorsion>(&kind_)) {
    for (const auto& c : p->coefficients)
      if (c.empty()) throw std::invalid_argument("periodic-torsion: every dimension needs coefficients");
  }
}

std::string Potential::kind_name() const {
  return std::visit(overloaded{[](const DoubleWell&) { return std::string("double-well-1d"); },
                               [](const GaussianMixture&) { return std::string("gaussian-mixture"); },
                               [](const MuellerBrown&) { return std::string("mueller-brown-2d"); },
                               [](const PeriodicTorsion&) { return std::string("periodic-torsion"); }},
                    kind_);
}

double Potential::energy(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw diff::ShapeError("energy: state has dimension " + std::to_string(x.size()) + ", potential expects " +
                           std::to_string(dim_));
  }
  return std::visit(
      overloaded{
          [&](const DoubleWell& w) {
            const double q = x[0] * x[0] - 1.0;
            return w.a * q * q + w.b * x[0];
          },
          [&](const GaussianMixture& g) {
            const std::size_t d = g.dim;
            std::vector<double> terms(g.weights.size());
            std::vector<double> z(d);
            for (std::size_t k = 0; k < terms.size(); ++k) {
              const auto& L = mixture_.chol[k];
              // Solve L z = x - mu.
              double q = 0.0;
              for (std::size_t i = 0; i < d; ++i) {
                double s = x[i] - g.means[k][i];
                for (std::size_t j = 0; j < i; ++j) s -= L[i * d + j] * z[j];
                z[i] = s / L[i * d + i];
                q += z[i] * z[i];
              }
              terms[k] = mixture_.log_norm[k] - 0.5 * q;
            }
            return -kT_ * diff::logsumexp(terms);
          },
          [&](const MuellerBrown& m) {
            double e = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
              const double dx = x[0] - m.x0[k], dy = x[1] - m.y0[k];
              e += m.A[k] * std::exp(m.a[k] * dx * dx + m.b[k] * dx * dy + m.c[k] * dy * dy);
            }
            return e;
          },
          [&](const PeriodicTorsion& p) {
            double e = 0.0;
            for (std::size_t dd = 0; dd < p.coefficients.size(); ++dd)
              for (std::size_t m = 0; m < p.coefficients[dd].size(); ++m)
                e += p.coefficients[dd][m] * std::cos(static_cast<double>(m + 1) * x[dd]);
            return e;
          }},
      kind_);
}

Box Potential::default_domain() const {
  return std::visit(overloaded{[](const DoubleWell&) { return Box{{-2.5}, {2.5}}; },
                               [](const GaussianMixture& g) {
                                 Box b{std::vector<double>(g.dim, 1e300), std::vector<double>(g.dim, -1e300)};
                                 for (std::size_t k = 0; k < g.weights.size(); ++k)
                                   for (std::size_t i = 0; i < g.dim; ++i) {
                                     const double s = 8.0 * std::sqrt(g.covariances[k][i * g.dim + i]);
                                     b.lo[i] = std::min(b.lo[i], g.means[k][i] - s);
                                     b.hi[i] = std::max(b.hi[i], g.means[k][i] + s);
                                   }
                                 return b;
                               },
                               [](const MuellerBrown&) { return Box{{-1.8, -0.6}, {1.2, 2.2}}; },
                               [](const PeriodicTorsion& p) {
                                 const std::size_t d = p.coefficients.size();
                                 return Box{std::vector<double>(d, -std::numbers::pi),
                                            std::vector<double>(d, std::numbers::pi)};
                               }},
                    kind_);
}

std::vector<double> Potential::default_partition() const {
  return std::visit(overloaded{[](const DoubleWell&) { return std::vector<double>{0.0}; },
                               [](const GaussianMixture&) { return std::vector<double>{0.0}; },
                               [](const MuellerBrown&) { return std::vector<double>{-0.3}; },
                               [](const PeriodicTorsion&) { return std::vector<double>{0.0}; }},
                    kind_);
}

std::vector<std::string> preset_names() {
  return {"double-well", "tilted-double-well", "gaussian", "gaussian-mixture", "mueller-brown", "periodic-torsion"};
}

Potential make_preset(std::string_view name, double kT) {
  if (name == "double-well") return Potential(DoubleWell{2.0, 0.0}, kT);
  if (name == "tilted-double-well") return Potential(DoubleWell{2.0, 0.5}, kT);
  if (name == "gaussian") return Potential(GaussianMixture{1, {1.0}, {{0.0}}, {{1.0}}}, kT);
  if (name == "gaussian-mixture") {
    return Potential(GaussianMixture{2, {0.5, 0.5}, {{-1.5, 0.0}, {1.5, 0.0}}, {{0.25, 0.0, 0.0, 0.25}, {0.25, 0.0, 0.0, 0.25}}},
                     kT);
  }
  if (name == "mueller-brown") return Potential(MuellerBrown{}, kT);
  if (name == "periodic-torsion") return Potential(PeriodicTorsion{{{0.5, -1.5}, {1.0}}}, kT);
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown potential preset '" + std::string(name) + "' (known: " + known + ")");
}

}  // namespace epo::energy
