#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace socnn::cli {

struct LayerCheck {
  std::string layer;
  double max_rel_error = 0;
  double tolerance = 1e-5;
  bool skipped = false;
  std::string detail;  ///< worst offender, or why the check was skipped
  std::size_t runs = 0;

  bool passed() const { return skipped || max_rel_error < tolerance; }
};

struct GradcheckOptions {
  std::size_t seeds = 10;
  std::uint64_t seed = 0;
  bool layers = true;
  bool models = true;
  /// Feed the robust layer a rank-deficient covariance (repeated zero
  /// eigenvalues), which the check must report as skipped.
  bool degenerate_robust = false;
  double layer_tolerance = 1e-5;
  double model_tolerance = 1e-4;
};

/// Central-difference checks for every layer (10 seeds each, dims <= 8) and
/// for every built-in model at toy scale.
std::vector<LayerCheck> run_gradchecks(const GradcheckOptions& options);

/// One line per check; returns true when everything passed.
bool print_gradcheck_report(const std::vector<LayerCheck>& checks, std::ostream& out);

}  // namespace socnn::cli
