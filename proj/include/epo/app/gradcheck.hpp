#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace epo::app {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  /// Random configurations per loss.
  std::size_t configs = 100;
  double tolerance = 1e-4;
  /// Name of a loss whose analytic gradient is deliberately perturbed
  /// (negative control); empty for none.
  std::string corrupt;
};

struct GradcheckRow {
  std::string loss;
  std::size_t configs = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// Central finite differences against reverse-mode gradients for every
/// training loss. Preference losses are differentiated with respect to the
/// adapter parameters, fm_loss with respect to the base weights.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts);

std::vector<std::string> gradcheck_losses();

}  // namespace epo::app
