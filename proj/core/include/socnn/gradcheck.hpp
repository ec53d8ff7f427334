#pragma once

#include <cstddef>
#include <functional>

#include "socnn/autodiff.hpp"

namespace socnn {

struct GradCheckResult {
  /// maxᵢ |analyticᵢ − centralᵢ| / max(1, |centralᵢ|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using ScalarFn = std::function<Var<double>(Graph<double>&, Var<double>)>;

/// Compares the reverse-mode gradient of a scalar function with central
/// differences of step `h`. `f` must be pure: it is re-evaluated on fresh
/// graphs for every perturbation.
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Reverse-mode gradient of `f` at `x`.
Tensor autodiff_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace socnn
