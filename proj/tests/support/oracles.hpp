#pragma once
// Independent reference implementations used as test oracles. They share no
// code with the library beyond the tensor container.

#include <algorithm>
#include <cmath>
#include <vector>

#include "socnn/rng.hpp"
#include "socnn/tensor.hpp"

namespace oracle {

using socnn::Shape;
using socnn::Tensor;

inline Tensor random(const Shape& s, socnn::Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Tensor random_symmetric(std::size_t n, socnn::Rng& rng) {
  Tensor a = random(Shape{n, n}, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j);
  return a;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.shape()[0], m = a.shape()[1], p = b.shape()[1];
  Tensor c(Shape{n, p});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < m; ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t(Shape{a.shape()[1], a.shape()[0]});
  for (std::size_t i = 0; i < a.shape()[0]; ++i)
    for (std::size_t j = 0; j < a.shape()[1]; ++j) t(j, i) = a(i, j);
  return t;
}

inline double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Two-pass biased covariance of the rows of x.
inline Tensor covariance(const Tensor& x) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<long double> mean(d, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (auto& m : mean) m /= n;
  Tensor c(Shape{d, d});
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      long double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      c(a, b) = static_cast<double>(s / n);
    }
  return c;
}

/// det(A) by LU with partial pivoting.
inline long double det(std::vector<long double> a, std::size_t n) {
  long double d = 1;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i * n + k]) > std::fabs(a[p * n + k])) p = i;
    if (a[p * n + k] == 0) return 0;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      d = -d;
    }
    d *= a[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const long double f = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
    }
  }
  return d;
}

/// Eigenvalues of a symmetric matrix, descending, as sign changes of
/// det(A − λI) located by a fine scan and refined by bisection.
inline std::vector<double> eigenvalues_by_bisection(const Tensor& a) {
  const std::size_t n = a.shape()[0];
  double radius = 0;  // Gershgorin bound
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0;
    for (std::size_t j = 0; j < n; ++j) r += std::abs(a(i, j));
    radius = std::max(radius, r);
  }
  auto charpoly = [&](long double lambda) {
    std::vector<long double> m(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m[i * n + j] = a(i, j) - (i == j ? lambda : 0);
    return det(m, n);
  };
  std::vector<double> roots;
  const std::size_t steps = 20000;
  long double lo = -radius - 1, prev = charpoly(lo);
  for (std::size_t s = 1; s <= steps; ++s) {
    const long double hi = -radius - 1 + (2 * radius + 2) * s / steps;
    const long double cur = charpoly(hi);
    if ((prev < 0) != (cur < 0)) {
      long double l = lo, h = hi, fl = prev;
      for (int it = 0; it < 200; ++it) {
        const long double mid = (l + h) / 2;
        const long double fm = charpoly(mid);
        if ((fm < 0) == (fl < 0)) {
          l = mid;
          fl = fm;
        } else {
          h = mid;
        }
      }
      roots.push_back(static_cast<double>((l + h) / 2));
    }
    lo = hi;
    prev = cur;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

}  // namespace oracle
