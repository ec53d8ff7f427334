#include "socnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace socnn {

Tensor autodiff_gradient(const ScalarFn& f, const Tensor& x) {
  Graph<double> g;
  auto leaf = g.leaf(x);
  auto loss = f(g, leaf);
  g.backward(loss);
  return g.grad(leaf);
}

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Graph<double> g;
  auto out = f(g, g.constant(x));
  if (out.value().numel() != 1) throw GraphError("finite_diff_check: function is not scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  const Tensor analytic = autodiff_gradient(f, x);
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = evaluate(f, probe);
    probe[i] = orig - h;
    const double fm = evaluate(f, probe);
    probe[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    if (!(err <= result.max_rel_error)) {
      // NaN compares false and is reported as the worst entry.
      result.max_rel_error = std::isnan(err) ? INFINITY : err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = central;
    }
  }
  return result;
}

}  // namespace socnn
