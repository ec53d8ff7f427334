#include "socnn/solayers.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <atomic>
#include <cmath>

namespace socnn {

namespace debug {

namespace {

constexpr std::array<std::string_view, 7> kFaultNames = {
    "", "cov", "augment", "o2t", "pv", "robust", "transition"};
std::atomic<std::size_t> g_fault{0};

}  // namespace

void inject_backward_fault(std::string_view layer) {
  for (std::size_t i = 0; i < kFaultNames.size(); ++i) {
    if (kFaultNames[i] == layer) {
      g_fault.store(i);
      return;
    }
  }
  throw ConfigError("unknown fault-injection layer '" + std::string(layer) + "'");
}

std::string_view backward_fault() { return kFaultNames[g_fault.load()]; }

}  // namespace debug

namespace {

template <typename T>
T fault_sign(std::string_view layer) {
  return debug::backward_fault() == layer ? T{-1} : T{1};
}

void require_square(const Shape& s, const char* what) {
  require_rank(s, 2, what);
  if (s[0] != s[1]) throw ShapeError(std::string(what) + ": matrix not square " + s.str());
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain forward evaluation.

template <typename T>
CovOutput<T> cov_forward(const BasicTensor<T>& x, bool augment, T beta) {
  require_rank(x.shape(), 2, "cov_forward");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw ShapeError("cov_forward: empty input (N = 0)");
  BasicTensor<T> mu(Shape{d});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(k, j);
  for (auto& v : mu.data()) v /= static_cast<T>(n);

  BasicTensor<T> centered = x;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) centered(k, j) -= mu[j];
  BasicTensor<T> sigma = symmetrize(scale(matmul_tn(centered, centered), T{1} / static_cast<T>(n)));

  CovOutput<T> out;
  out.c = augment ? cov_augment(sigma, mu, beta) : sigma;
  out.mu = std::move(mu);
  out.sigma = std::move(sigma);
  return out;
}

template <typename T>
BasicTensor<T> cov_augment(const BasicTensor<T>& sigma, const BasicTensor<T>& mu, T beta) {
  require_square(sigma.shape(), "cov_augment");
  require_rank(mu.shape(), 1, "cov_augment mu");
  const std::size_t d = sigma.rows();
  if (mu.numel() != d) throw ShapeError("cov_augment: mean length differs from covariance side");
  BasicTensor<T> c(Shape{d + 1, d + 1});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) c(i, j) = sigma(i, j) + beta * beta * mu[i] * mu[j];
    c(i, d) = beta * mu[i];
    c(d, i) = beta * mu[i];
  }
  c(d, d) = T{1};
  return c;
}

template <typename T>
BasicTensor<T> o2t_forward(const BasicTensor<T>& m, const O2TParams<T>& p) {
  require_square(m.shape(), "o2t_forward");
  require_rank(p.w.shape(), 2, "o2t_forward weights");
  if (p.w.cols() != m.rows()) {
    throw ShapeError("o2t_forward: weights " + p.w.shape().str() + " do not fit input " +
                     m.shape().str());
  }
  return symmetrize(matmul_nt(matmul(p.w, m), p.w));
}

template <typename T>
BasicTensor<T> pv_forward(const BasicTensor<T>& y, const PVParams<T>& p) {
  require_square(y.shape(), "pv_forward");
  require_rank(p.w.shape(), 2, "pv_forward weights");
  if (p.w.rows() != y.rows()) {
    throw ShapeError("pv_forward: weights " + p.w.shape().str() + " do not fit input " +
                     y.shape().str());
  }
  const auto prod = hadamard(p.w, matmul(y, p.w));
  BasicTensor<T> v(Shape{p.w.cols()});
  for (std::size_t i = 0; i < prod.rows(); ++i)
    for (std::size_t j = 0; j < prod.cols(); ++j) v[j] += prod(i, j);
  return v;
}

template <typename T>
BasicTensor<T> pv_forward_quadratic(const BasicTensor<T>& y, const PVParams<T>& p) {
  require_square(y.shape(), "pv_forward_quadratic");
  require_rank(p.w.shape(), 2, "pv_forward_quadratic weights");
  const std::size_t d = y.rows(), out = p.w.cols();
  if (p.w.rows() != d) throw ShapeError("pv_forward_quadratic: weights do not fit input");
  BasicTensor<T> v(Shape{out});
  for (std::size_t j = 0; j < out; ++j) {
    T acc{0};
    for (std::size_t a = 0; a < d; ++a) {
      T inner{0};
      for (std::size_t b = 0; b < d; ++b) inner += y(a, b) * p.w(b, j);
      acc += p.w(a, j) * inner;
    }
    v[j] = acc;
  }
  return v;
}

double robust_f(double x, double alpha) {
  const double c = (1.0 - 2.0 * alpha) / (2.0 * alpha);
  return std::sqrt(c * c + x / alpha) - (1.0 - alpha) / (2.0 * alpha);
}

double robust_f_derivative(double x, double alpha) {
  const double c = (1.0 - 2.0 * alpha) / (2.0 * alpha);
  return 1.0 / (2.0 * alpha * std::sqrt(c * c + x / alpha));
}

SpectralFn robust_spectral_fn(double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("robust estimator: alpha must be positive");
  return {[alpha](double x) { return robust_f(x, alpha); },
          [alpha](double x) { return robust_f_derivative(x, alpha); }};
}

SpectralFn identity_spectral_fn() {
  return {[](double x) { return x; }, [](double) { return 1.0; }};
}

namespace {

struct SpectralForward {
  EigPair eig;
  Tensor mapped;  // f(max(S, 0))
  Tensor out;
};

SpectralForward spectral_forward(const Tensor& sigma, const SpectralFn& fn) {
  SpectralForward r{sym_eig(sigma), {}, {}};
  const std::size_t d = r.eig.values.numel();
  r.mapped = Tensor(Shape{d});
  for (std::size_t i = 0; i < d; ++i) r.mapped[i] = fn.f(std::max(r.eig.values[i], 0.0));
  Tensor scaled = r.eig.vectors;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) scaled(i, j) *= r.mapped[j];
  r.out = symmetrize(matmul_nt(scaled, r.eig.vectors));
  return r;
}

Tensor spectral_backward(const SpectralForward& fwd, const SpectralFn& fn, const Tensor& grad) {
  const Tensor& u = fwd.eig.vectors;
  const std::size_t d = u.rows();
  // Σ̂ = U F Uᵀ: dU = (G + Gᵀ) U F, dF = diag(Uᵀ G U).
  const Tensor gsym = add(grad, transpose(grad));
  Tensor du = matmul(gsym, u);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) du(i, j) *= fwd.mapped[j];
  const Tensor proj = matmul(matmul_tn(u, grad), u);
  Tensor ds(Shape{d});
  for (std::size_t i = 0; i < d; ++i) {
    const double s = fwd.eig.values[i];
    ds[i] = s >= 0.0 ? fn.df(s) * proj(i, i) : 0.0;
  }
  return sym_eig_backward(fwd.eig, du, ds);
}

}  // namespace

template <typename T>
BasicTensor<T> robust_rectify(const BasicTensor<T>& sigma, double alpha) {
  require_square(sigma.shape(), "robust_rectify");
  return spectral_forward(sigma.template cast<double>(), robust_spectral_fn(alpha))
      .out.template cast<T>();
}

template <typename T>
BasicTensor<T> transition_forward(const BasicTensor<T>& x, const TransitionParams<T>& p) {
  require_rank(x.shape(), 2, "transition_forward");
  require_rank(p.w.shape(), 2, "transition_forward weights");
  require_rank(p.b.shape(), 1, "transition_forward bias");
  if (p.w.cols() != x.cols() || p.b.numel() != p.w.rows()) {
    throw ShapeError("transition_forward: weights " + p.w.shape().str() + " / bias " +
                     p.b.shape().str() + " do not fit input " + x.shape().str());
  }
  BasicTensor<T> out = matmul_nt(x, p.w);
  for (std::size_t k = 0; k < out.rows(); ++k)
    for (std::size_t j = 0; j < out.cols(); ++j) out(k, j) += p.b[j];
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable versions.

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  require_rank(xv.shape(), 2, "mean_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n == 0) throw ShapeError("mean_rows: empty input (N = 0)");
  BasicTensor<T> mu(Shape{d});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) mu[j] += xv(k, j);
  for (auto& v : mu.data()) v /= static_cast<T>(n);
  return x.graph->record("mean_rows", {x}, std::move(mu),
                         [x, n, d](Graph<T>& g, const BasicTensor<T>& dmu) {
                           BasicTensor<T> dx(Shape{n, d});
                           for (std::size_t k = 0; k < n; ++k)
                             for (std::size_t j = 0; j < d; ++j)
                               dx(k, j) = dmu[j] / static_cast<T>(n);
                           g.accumulate(x, std::move(dx));
                         });
}

template <typename T>
Var<T> covariance(Var<T> x) {
  const auto& xv = x.value();
  require_rank(xv.shape(), 2, "covariance");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n == 0) throw ShapeError("covariance: empty input (N = 0)");
  auto fwd = cov_forward(xv, false);
  return x.graph->record(
      "cov", {x}, std::move(fwd.sigma),
      [x, n, d, mu = std::move(fwd.mu)](Graph<T>& g, const BasicTensor<T>& grad) {
        const auto& xv = g.value(x);
        BasicTensor<T> centered = xv;
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t j = 0; j < d; ++j) centered(k, j) -= mu[j];
        const auto gsym = add(grad, transpose(grad));
        BasicTensor<T> dx =
            scale(matmul(centered, gsym), fault_sign<T>("cov") / static_cast<T>(n));
        // Project out the component along the all-ones direction (centering).
        BasicTensor<T> col_mean(Shape{d});
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t j = 0; j < d; ++j) col_mean[j] += dx(k, j);
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t j = 0; j < d; ++j) dx(k, j) -= col_mean[j] / static_cast<T>(n);
        g.accumulate(x, std::move(dx));
      });
}

template <typename T>
Var<T> cov_augment(Var<T> sigma, Var<T> mu, T beta) {
  auto value = cov_augment(sigma.value(), mu.value(), beta);
  const std::size_t d = mu.value().numel();
  return sigma.graph->record(
      "augment", {sigma, mu}, std::move(value),
      [sigma, mu, beta, d](Graph<T>& g, const BasicTensor<T>& grad) {
        const T sign = fault_sign<T>("augment");
        BasicTensor<T> dsigma(Shape{d, d});
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) dsigma(i, j) = grad(i, j);
        const auto& m = g.value(mu);
        BasicTensor<T> dmu(Shape{d});
        for (std::size_t i = 0; i < d; ++i) {
          T acc{0};
          for (std::size_t j = 0; j < d; ++j) acc += (grad(i, j) + grad(j, i)) * m[j];
          dmu[i] = sign * (beta * beta * acc + beta * (grad(i, d) + grad(d, i)));
        }
        g.accumulate(sigma, std::move(dsigma));
        g.accumulate(mu, std::move(dmu));
      });
}

template <typename T>
Var<T> o2t(Var<T> m, Var<T> w) {
  auto value = o2t_forward(m.value(), O2TParams<T>{w.value(), false});
  return m.graph->record(
      "o2t", {m, w}, std::move(value), [m, w](Graph<T>& g, const BasicTensor<T>& grad) {
        const auto& wv = g.value(w);
        const auto& mv = g.value(m);
        const auto gsym = symmetrize(grad);
        if (g.requires_grad(m)) g.accumulate(m, matmul(matmul_tn(wv, gsym), wv));
        if (g.requires_grad(w)) {
          // d/dW of W M Wᵀ against a symmetric G: G W (M + Mᵀ).
          auto dw = matmul(matmul(gsym, wv), add(mv, transpose(mv)));
          g.accumulate(w, scale(dw, fault_sign<T>("o2t")));
        }
      });
}

template <typename T>
Var<T> pv(Var<T> y, Var<T> w) {
  auto value = pv_forward(y.value(), PVParams<T>{w.value()});
  return y.graph->record(
      "pv", {y, w}, std::move(value), [y, w](Graph<T>& g, const BasicTensor<T>& dv) {
        const auto& wv = g.value(w);
        const auto& yv = g.value(y);
        const std::size_t rows = wv.rows(), cols = wv.cols();
        if (g.requires_grad(y)) {
          BasicTensor<T> wd = wv;
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) wd(i, j) *= dv[j];
          g.accumulate(y, matmul_nt(wd, wv));
        }
        if (g.requires_grad(w)) {
          BasicTensor<T> dw = matmul(add(yv, transpose(yv)), wv);
          const T sign = fault_sign<T>("pv");
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) dw(i, j) *= sign * dv[j];
          g.accumulate(w, std::move(dw));
        }
      });
}

template <typename T>
Var<T> spectral_map(Var<T> sigma, const SpectralFn& fn) {
  require_square(sigma.shape(), "robust_rectify");
  auto fwd = std::make_shared<SpectralForward>(
      spectral_forward(sigma.value().template cast<double>(), fn));
  auto out = fwd->out.template cast<T>();
  return sigma.graph->record(
      "robust", {sigma}, std::move(out),
      [sigma, fwd, fn](Graph<T>& g, const BasicTensor<T>& grad) {
        Tensor d = spectral_backward(*fwd, fn, grad.template cast<double>());
        if (debug::backward_fault() == "robust") d = scale(d, -1.0);
        g.accumulate(sigma, d.template cast<T>());
      });
}

template <typename T>
Var<T> robust_rectify(Var<T> sigma, double alpha) {
  return spectral_map(sigma, robust_spectral_fn(alpha));
}

template <typename T>
Var<T> transition(Var<T> x, Var<T> w, Var<T> b) {
  auto value = transition_forward(x.value(), TransitionParams<T>{w.value(), b.value()});
  return x.graph->record(
      "transition", {x, w, b}, std::move(value),
      [x, w, b](Graph<T>& g, const BasicTensor<T>& grad) {
        if (g.requires_grad(x)) g.accumulate(x, matmul(grad, g.value(w)));
        if (g.requires_grad(w)) {
          g.accumulate(w, scale(matmul_tn(grad, g.value(x)), fault_sign<T>("transition")));
        }
        if (g.requires_grad(b)) {
          BasicTensor<T> db(Shape{grad.cols()});
          for (std::size_t k = 0; k < grad.rows(); ++k)
            for (std::size_t j = 0; j < grad.cols(); ++j) db[j] += grad(k, j);
          g.accumulate(b, std::move(db));
        }
      });
}

template <typename T>
Var<T> cov_layer(Var<T> x, const CovLayerOptions& options) {
  Var<T> sigma = covariance(x);
  if (options.robust) sigma = robust_rectify(sigma, options.alpha);
  if (!options.augment) return sigma;
  return cov_augment(sigma, mean_rows(x), static_cast<T>(options.beta));
}

#define SOCNN_INSTANTIATE(T)                                                                 \
  template struct CovOutput<T>;                                                              \
  template CovOutput<T> cov_forward(const BasicTensor<T>&, bool, T);                         \
  template BasicTensor<T> cov_augment(const BasicTensor<T>&, const BasicTensor<T>&, T);      \
  template BasicTensor<T> o2t_forward(const BasicTensor<T>&, const O2TParams<T>&);           \
  template BasicTensor<T> pv_forward(const BasicTensor<T>&, const PVParams<T>&);             \
  template BasicTensor<T> pv_forward_quadratic(const BasicTensor<T>&, const PVParams<T>&);   \
  template BasicTensor<T> robust_rectify(const BasicTensor<T>&, double);                     \
  template BasicTensor<T> transition_forward(const BasicTensor<T>&,                          \
                                             const TransitionParams<T>&);                    \
  template Var<T> mean_rows(Var<T>);                                                         \
  template Var<T> covariance(Var<T>);                                                        \
  template Var<T> cov_augment(Var<T>, Var<T>, T);                                            \
  template Var<T> o2t(Var<T>, Var<T>);                                                       \
  template Var<T> pv(Var<T>, Var<T>);                                                        \
  template Var<T> spectral_map(Var<T>, const SpectralFn&);                                   \
  template Var<T> robust_rectify(Var<T>, double);                                            \
  template Var<T> transition(Var<T>, Var<T>, Var<T>);                                        \
  template Var<T> cov_layer(Var<T>, const CovLayerOptions&);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
