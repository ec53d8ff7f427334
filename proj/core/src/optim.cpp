#include "socnn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "socnn/linalg.hpp"

namespace socnn {

template <typename T>
Parameter<T>& ParamSet<T>::add(std::string name, BasicTensor<T> value, Manifold manifold,
                               bool backbone) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  Parameter<T> p;
  p.name = std::move(name);
  p.grad = BasicTensor<T>(value.shape());
  p.value = std::move(value);
  p.manifold = manifold;
  p.backbone = backbone;
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
Parameter<T>* ParamSet<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
const Parameter<T>* ParamSet<T>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T{0});
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
std::size_t ParamSet<T>::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.numel();
  return n;
}

template <typename T>
void ParamSet<T>::freeze_backbone(bool frozen) {
  for (auto& p : params_) p.trainable = !(frozen && p.backbone);
}

void SgdConfig::validate() const {
  if (!(initial_lr > 0.0)) throw ConfigError("optim: initial_lr must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ConfigError("optim: plateau_factor must lie in (0, 1)");
  }
  if (plateau_patience == 0) throw ConfigError("optim: plateau_patience must be >= 1");
  if (momentum < 0.0) throw ConfigError("optim: momentum must be >= 0");
  if (batch_size == 0) throw ConfigError("optim: batch_size must be >= 1");
}

template <typename T>
BasicTensor<T> glorot_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("glorot_init: fans must be positive");
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  BasicTensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.uniform(-a, a));
  return out;
}

template <typename T>
void sgd_step(Parameter<T>& p, T lr, T momentum) {
  require_same_shape(p.value.shape(), p.grad.shape(), "sgd_step");
  if (momentum > T{0}) {
    if (p.velocity.shape() != p.value.shape()) p.velocity = BasicTensor<T>(p.value.shape());
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      p.velocity[i] = momentum * p.velocity[i] + p.grad[i];
      p.value[i] -= lr * p.velocity[i];
    }
    return;
  }
  for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] -= lr * p.grad[i];
}

namespace {

// Row-orthonormal case (rows ≤ cols), in double.
Tensor stiefel_rows_step(const Tensor& w, const Tensor& g, double lr) {
  const Tensor gw = matmul_nt(g, w);  // r×r
  const Tensor projected = sub(g, matmul(symmetrize(gw), w));
  Tensor step = scale(projected, lr);
  if (std::all_of(step.data().begin(), step.data().end(), [](double v) { return v == 0.0; })) {
    return w;
  }
  const Tensor moved = sub(w, step);
  return transpose(qr_thin(transpose(moved)).q);
}

}  // namespace

template <typename T>
BasicTensor<T> stiefel_step(const BasicTensor<T>& w, const BasicTensor<T>& g, T lr) {
  require_rank(w.shape(), 2, "stiefel_step");
  require_same_shape(w.shape(), g.shape(), "stiefel_step");
  const bool tall = w.rows() > w.cols();
  Tensor wd = w.template cast<double>();
  Tensor gd = g.template cast<double>();
  if (tall) {
    wd = transpose(wd);
    gd = transpose(gd);
  }
  Tensor out = stiefel_rows_step(wd, gd, static_cast<double>(lr));
  if (tall) out = transpose(out);
  return out.template cast<T>();
}

template <typename T>
BasicTensor<T> orthonormalize(const BasicTensor<T>& w) {
  require_rank(w.shape(), 2, "orthonormalize");
  Tensor wd = w.template cast<double>();
  if (w.rows() > w.cols()) return qr_thin(wd).q.template cast<T>();
  return transpose(qr_thin(transpose(wd)).q).template cast<T>();
}

template <typename T>
double orthonormality_error(const BasicTensor<T>& w) {
  Tensor wd = w.template cast<double>();
  const Tensor gram = w.rows() > w.cols() ? matmul_tn(wd, wd) : matmul_nt(wd, wd);
  return max_abs_diff(gram, Tensor::identity(gram.rows()));
}

template <typename T>
void optimizer_step(ParamSet<T>& params, double lr, double momentum) {
  for (auto& p : params.items()) {
    if (!p.trainable) continue;
    if (p.manifold == Manifold::Stiefel) {
      p.value = stiefel_step(p.value, p.grad, static_cast<T>(lr));
    } else {
      sgd_step(p, static_cast<T>(lr), static_cast<T>(momentum));
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, std::size_t patience,
                                   double threshold)
    : lr_(initial_lr), factor_(factor), patience_(patience), threshold_(threshold) {
  if (patience_ == 0) throw ConfigError("plateau scheduler: patience must be >= 1");
}

bool PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_ - threshold_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    ++reductions_;
    return true;
  }
  return false;
}

void PlateauScheduler::restore(const State& s) {
  lr_ = s.lr;
  best_ = s.best;
  bad_epochs_ = s.bad_epochs;
  reductions_ = s.reductions;
}

#define SOCNN_INSTANTIATE(T)                                                               \
  template struct Parameter<T>;                                                            \
  template class ParamSet<T>;                                                              \
  template BasicTensor<T> glorot_init(const Shape&, std::size_t, std::size_t, Rng&);       \
  template void sgd_step(Parameter<T>&, T, T);                                             \
  template BasicTensor<T> stiefel_step(const BasicTensor<T>&, const BasicTensor<T>&, T);   \
  template BasicTensor<T> orthonormalize(const BasicTensor<T>&);                           \
  template double orthonormality_error(const BasicTensor<T>&);                             \
  template void optimizer_step(ParamSet<T>&, double, double);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
