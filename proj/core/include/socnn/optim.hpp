#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "socnn/rng.hpp"
#include "socnn/tensor.hpp"

namespace socnn {

enum class Manifold { Euclidean, Stiefel };

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> velocity;  ///< momentum buffer, allocated on first use
  Manifold manifold = Manifold::Euclidean;
  bool trainable = true;
  /// Belongs to the convolutional part frozen during phase one.
  bool backbone = false;
};

/// Ordered parameter collection. Order is fixed at construction and defines
/// checkpoint layout and gradient reduction order.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(std::string name, BasicTensor<T> value,
                    Manifold manifold = Manifold::Euclidean, bool backbone = false);

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;

  /// Resets every gradient accumulator to zero.
  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;
  /// Marks backbone parameters frozen (phase one) or everything trainable.
  void freeze_backbone(bool frozen);

 private:
  std::vector<Parameter<T>> params_;
};

struct SgdConfig {
  double initial_lr = 0.01;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 8;
  /// Validation loss must drop below best − threshold to count as progress.
  double plateau_threshold = 1e-5;
  double momentum = 0.0;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Uniform on [−a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
BasicTensor<T> glorot_init(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// W ← W − lr·G, or with momentum μ > 0: V ← μV + G, W ← W − lr·V.
template <typename T>
void sgd_step(Parameter<T>& p, T lr, T momentum = T{0});

/// Riemannian SGD step on the Stiefel manifold with QR retraction. W has
/// orthonormal rows when rows ≤ cols and orthonormal columns otherwise.
///   G̃ = G − sym(G Wᵀ) W,  W' = qf((W − lr·G̃)ᵀ)ᵀ
/// A step that is exactly zero returns W unchanged.
template <typename T>
BasicTensor<T> stiefel_step(const BasicTensor<T>& w, const BasicTensor<T>& g, T lr);

/// Nearest orientation-preserving point on the Stiefel manifold via QR.
template <typename T>
BasicTensor<T> orthonormalize(const BasicTensor<T>& w);

/// ‖W Wᵀ − I‖_max (or ‖WᵀW − I‖_max for tall W).
template <typename T>
double orthonormality_error(const BasicTensor<T>& w);

/// Applies one update to every trainable parameter using its accumulated
/// gradient. Stiefel parameters take stiefel_step (momentum is not applied
/// on the manifold).
template <typename T>
void optimizer_step(ParamSet<T>& params, double lr, double momentum);

/// Reduce-on-plateau learning-rate schedule.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor, std::size_t patience,
                   double threshold = 1e-5);

  /// Records one epoch's validation loss; returns true when the rate was
  /// reduced at this epoch.
  bool observe(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  std::size_t reductions() const { return reductions_; }

  struct State {
    double lr, best;
    std::size_t bad_epochs, reductions;
  };
  State state() const { return {lr_, best_, bad_epochs_, reductions_}; }
  void restore(const State& s);

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace socnn
