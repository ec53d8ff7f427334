#pragma once

#include <functional>
#include <string_view>

#include "socnn/autodiff.hpp"
#include "socnn/linalg.hpp"

namespace socnn {

inline constexpr double kDefaultBeta = 0.3;
inline constexpr double kDefaultAlpha = 0.75;

/// Output of the Cov layer: the feature covariance and mean, and the matrix
/// handed to the rest of the unit (the mean-augmented one when enabled).
template <typename T>
struct CovOutput {
  BasicTensor<T> c;      ///< (D+1)×(D+1) when augmented, else D×D
  BasicTensor<T> mu;     ///< D
  BasicTensor<T> sigma;  ///< D×D
};

/// Second-order transform Y = W M Wᵀ with W stored dout×din.
template <typename T>
struct O2TParams {
  BasicTensor<T> w;
  bool orthonormal = false;
};

/// Parametric vectorization weights, d'×d''.
template <typename T>
struct PVParams {
  BasicTensor<T> w;
};

/// Per-site affine map x ↦ W x + b with W D̃×D (a 1×1 convolution).
template <typename T>
struct TransitionParams {
  BasicTensor<T> w;
  BasicTensor<T> b;
};

// ---------------------------------------------------------------------------
// Plain forward evaluation.

/// Biased (1/N) covariance and mean of the rows of X (N×D); augmented with
/// the mean when `augment` is set.
template <typename T>
CovOutput<T> cov_forward(const BasicTensor<T>& x, bool augment = true,
                         T beta = static_cast<T>(kDefaultBeta));

/// [[Σ + β²μμᵀ, βμ], [βμᵀ, 1]]
template <typename T>
BasicTensor<T> cov_augment(const BasicTensor<T>& sigma, const BasicTensor<T>& mu, T beta);

template <typename T>
BasicTensor<T> o2t_forward(const BasicTensor<T>& m, const O2TParams<T>& p);

/// v_j = Σ_i [W ⊙ (Y W)]_ij, the matrix-product formulation.
template <typename T>
BasicTensor<T> pv_forward(const BasicTensor<T>& y, const PVParams<T>& p);

/// v_j = W[:,j]ᵀ Y W[:,j], evaluated one column at a time.
template <typename T>
BasicTensor<T> pv_forward_quadratic(const BasicTensor<T>& y, const PVParams<T>& p);

/// Eigenvalue rectifier f(x) = sqrt(((1−2α)/(2α))² + x/α) − (1−α)/(2α).
double robust_f(double x, double alpha = kDefaultAlpha);
double robust_f_derivative(double x, double alpha = kDefaultAlpha);

/// Σ̂ = U f(max(S, 0)) Uᵀ.
template <typename T>
BasicTensor<T> robust_rectify(const BasicTensor<T>& sigma, double alpha = kDefaultAlpha);

template <typename T>
BasicTensor<T> transition_forward(const BasicTensor<T>& x, const TransitionParams<T>& p);

// ---------------------------------------------------------------------------
// Differentiable versions.

template <typename T>
Var<T> mean_rows(Var<T> x);

/// Biased covariance of the rows of x, symmetrized.
template <typename T>
Var<T> covariance(Var<T> x);

template <typename T>
Var<T> cov_augment(Var<T> sigma, Var<T> mu, T beta);

template <typename T>
Var<T> o2t(Var<T> m, Var<T> w);

template <typename T>
Var<T> pv(Var<T> y, Var<T> w);

/// Scalar map applied to eigenvalues, with its derivative.
struct SpectralFn {
  std::function<double(double)> f;
  std::function<double(double)> df;
};

SpectralFn robust_spectral_fn(double alpha = kDefaultAlpha);
/// f(x) = x; turns robust_rectify into an eigen round-trip.
SpectralFn identity_spectral_fn();

/// U f(max(S,0)) Uᵀ with backward through sym_eig_backward.
template <typename T>
Var<T> robust_rectify(Var<T> sigma, double alpha = kDefaultAlpha);
template <typename T>
Var<T> spectral_map(Var<T> sigma, const SpectralFn& fn);

/// x: N×D, w: D̃×D, b: D̃ → N×D̃.
template <typename T>
Var<T> transition(Var<T> x, Var<T> w, Var<T> b);

struct CovLayerOptions {
  bool augment = true;
  double beta = kDefaultBeta;
  bool robust = false;
  double alpha = kDefaultAlpha;
};

/// Full Cov layer: covariance (optionally rectified), then mean augmentation.
template <typename T>
Var<T> cov_layer(Var<T> x, const CovLayerOptions& options);

namespace debug {

/// Deliberately corrupts one layer's backward rule (sign flip of the weight
/// gradient, or of the input gradient for parameter-free layers). Used by
/// mutation tests of the gradient checker. Pass "" to clear.
void inject_backward_fault(std::string_view layer);
std::string_view backward_fault();

}  // namespace debug

}  // namespace socnn
