#include "socnn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace socnn {

namespace {

void require_square(const Tensor& a, const char* what) {
  require_rank(a.shape(), 2, what);
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(what) + ": matrix not square " + a.shape().str());
  }
}

double off_diagonal_norm(const Tensor& a) {
  const std::size_t n = a.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

// One Jacobi rotation zeroing a(p,q); applied as a ← Jᵀ a J, v ← v J.
void rotate(Tensor& a, Tensor& v, std::size_t p, std::size_t q) {
  const std::size_t n = a.rows();
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  double t;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p), akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k), aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p), vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

EigPair sym_eig(const Tensor& input, const JacobiOptions& options) {
  require_square(input, "sym_eig");
  if (!all_finite(input)) throw NumericError("sym_eig: non-finite matrix entry");
  const std::size_t n = input.rows();
  Tensor a = symmetrize(input);
  Tensor v = Tensor::identity(n);

  const double threshold = options.tolerance * frobenius_norm(a);
  bool converged = false;
  for (int sweep = 0; sweep <= options.max_sweeps; ++sweep) {
    if (off_diagonal_norm(a) <= threshold) {
      converged = true;
      break;
    }
    if (sweep == options.max_sweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
  }
  if (!converged) {
    throw ConvergenceError("sym_eig: no convergence after " +
                           std::to_string(options.max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigPair out{Tensor(Shape{n, n}), Tensor(Shape{n})};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    std::size_t pivot = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(pivot, src))) pivot = r;
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

Tensor sym_eig_backward(const EigPair& eig, const Tensor& d_vectors, const Tensor& d_values,
                        double gap_floor) {
  const Tensor& u = eig.vectors;
  const Tensor& s = eig.values;
  const std::size_t n = s.numel();
  Tensor inner(Shape{n, n});
  if (!d_vectors.empty()) {
    require_same_shape(d_vectors.shape(), u.shape(), "sym_eig_backward dU");
    const Tensor g = matmul_tn(u, d_vectors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double gap = s[j] - s[i];
        if (std::abs(gap) < gap_floor) gap = std::copysign(gap_floor, gap);
        inner(i, j) = g(i, j) / gap;
      }
  }
  if (!d_values.empty()) {
    if (d_values.numel() != n) throw ShapeError("sym_eig_backward: dS length mismatch");
    for (std::size_t i = 0; i < n; ++i) inner(i, i) += d_values[i];
  }
  return symmetrize(matmul_nt(matmul(u, inner), u));
}

QrResult qr_thin(const Tensor& a) {
  require_rank(a.shape(), 2, "qr_thin");
  const std::size_t m = a.rows(), n = a.cols();
  if (m < n) throw ShapeError("qr_thin: expects rows >= cols, got " + a.shape().str());
  if (!all_finite(a)) throw NumericError("qr_thin: non-finite matrix entry");

  Tensor r = a;
  std::vector<std::vector<double>> reflectors(n);
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    std::vector<double> v(m - k, 0.0);
    if (norm > 0.0) {
      const double alpha = r(k, k) > 0.0 ? -norm : norm;
      for (std::size_t i = k; i < m; ++i) v[i - k] = r(i, k);
      v[0] -= alpha;
      double vnorm = 0.0;
      for (double x : v) vnorm += x * x;
      vnorm = std::sqrt(vnorm);
      if (vnorm > 0.0) {
        for (double& x : v) x /= vnorm;
        for (std::size_t j = k; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t i = k; i < m; ++i) dot += v[i - k] * r(i, j);
          for (std::size_t i = k; i < m; ++i) r(i, j) -= 2.0 * v[i - k] * dot;
        }
      }
    }
    reflectors[k] = std::move(v);
  }

  // Q = H_0 H_1 … H_{n-1} applied to the first n columns of the identity.
  Tensor q(Shape{m, n});
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const auto& v = reflectors[k];
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i - k] * q(i, j);
      for (std::size_t i = k; i < m; ++i) q(i, j) -= 2.0 * v[i - k] * dot;
    }
  }

  QrResult out{std::move(q), Tensor(Shape{n, n})};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) out.r(i, j) = r(i, j);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(out.r(k, k)) < 1e-12) {
      throw NumericError("qr_thin: rank deficient input (|R_" + std::to_string(k) +
                         std::to_string(k) + "| < 1e-12)");
    }
    if (out.r(k, k) < 0.0) {
      for (std::size_t j = k; j < n; ++j) out.r(k, j) = -out.r(k, j);
      for (std::size_t i = 0; i < m; ++i) out.q(i, k) = -out.q(i, k);
    }
  }
  return out;
}

double min_eigenvalue(const Tensor& a) {
  const auto eig = sym_eig(a);
  return eig.values.numel() ? eig.values[eig.values.numel() - 1] : 0.0;
}

std::size_t numerical_rank(const Tensor& a, double rel_threshold) {
  const auto eig = sym_eig(a);
  if (eig.values.numel() == 0 || eig.values[0] <= 0.0) return 0;
  const double cut = rel_threshold * eig.values[0];
  std::size_t rank = 0;
  for (double s : eig.values.data())
    if (s > cut) ++rank;
  return rank;
}

}  // namespace socnn
