#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "socnn/autodiff.hpp"
#include "socnn/cdu.hpp"
#include "socnn/optim.hpp"
#include "socnn/rng.hpp"

namespace socnn {

/// 3×3 "same" convolutions, each followed by ReLU, then one 2×2 max-pool.
struct ConvBlockSpec {
  std::vector<std::size_t> channels;
};

enum class HeadKind {
  Fc,        ///< flatten → FC(width) → ReLU
  MeanPool,  ///< mean over sites → [FC(width) → ReLU]
  Cdu,       ///< covariance descriptor unit(s) with fusion
};

enum class DimPlan { Same, Div2, Mul2 };

struct ModelSpec {
  std::string name;
  /// Image input H×W×C when the backbone is non-empty; otherwise the input is
  /// an N×D feature matrix with height = N sites and channels = D.
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t input_channels = 3;
  std::size_t kernel = 3;
  std::vector<ConvBlockSpec> backbone;
  HeadKind head = HeadKind::Fc;
  std::size_t fc_width = 500;
  CduHeadSpec cdu;
  std::optional<std::size_t> transition_dim;
  std::size_t classes = 10;

  void validate() const;
  /// Channels leaving the backbone.
  std::size_t backbone_channels() const;
  /// Channels entering the head (after the transition layer, if any).
  std::size_t head_channels() const;
  /// Spatial sites (N) leaving the backbone.
  std::size_t backbone_sites() const;
  Shape input_shape() const;
};

/// FitNet-v1 channel plan: (16,16,16), (32,32,32), (48,48,64).
std::vector<ConvBlockSpec> fitnet_backbone();

/// FitNet backbone → FC(500) → FC(10).
ModelSpec build_fitnet_baseline();

/// FitNet backbone → CDU(mean-augmented Cov, k O2T layers, PV) → FC(10).
/// Same: every O2T is 64 wide; Div2: starts at 50·2^(k−1) and halves;
/// Mul2: starts at 50 and doubles. PV matches the last O2T (64 for k = 0).
ModelSpec build_so_cnn(std::size_t k, DimPlan plan);

/// Inserts a D̃-wide 1×1 transition layer between backbone and CDU head.
ModelSpec attach_transition(ModelSpec spec, std::size_t out_dim);

/// CDU head directly on N×D features (no backbone).
ModelSpec build_synth_cdu(std::size_t sites, std::size_t dim, std::size_t classes,
                          std::size_t o2t_dim, std::size_t pv_dim);
/// First-order control: mean over sites → FC(hidden) → ReLU → classifier.
ModelSpec build_synth_meanpool(std::size_t sites, std::size_t dim, std::size_t classes,
                               std::size_t hidden);

/// Named builders: fitnet, so-cnn-<k>-<same|div2|x2>.
ModelSpec model_by_name(const std::string& name);
std::vector<std::string> builtin_model_names();

/// Same architecture family shrunk for finite-difference checks: 8×8×3
/// input, two blocks of two convolutions (2 and 4 channels), widths divided
/// down to single digits.
ModelSpec scaled_for_test(const ModelSpec& spec);

struct LayerParamCount {
  std::string layer;
  std::string shape;
  std::size_t count = 0;
};

/// Trainable scalars per layer. Conv, dense and transition layers carry
/// biases; O2T and PV do not.
std::vector<LayerParamCount> param_breakdown(const ModelSpec& spec);
std::size_t count_params(const ModelSpec& spec);

/// Instantiated network: parameters plus a define-by-run forward pass.
template <typename T>
class Model {
 public:
  /// Glorot-initialized parameters; orthonormal O2T weights are projected
  /// onto the Stiefel manifold.
  Model(ModelSpec spec, Rng rng);

  const ModelSpec& spec() const { return spec_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  /// Places parameters on the tape: trainable ones as leaves, frozen ones as
  /// constants.
  std::vector<Var<T>> bind(Graph<T>& g) const;

  /// Logits for one input.
  Var<T> forward(Var<T> input, std::span<const Var<T>> bound) const;
  BasicTensor<T> predict(const BasicTensor<T>& input) const;

  /// Adds the tape's parameter gradients to `sink` (one tensor per parameter).
  void collect_grads(const Graph<T>& g, std::span<const Var<T>> bound,
                     std::vector<BasicTensor<T>>& sink) const;

 private:
  ModelSpec spec_;
  ParamSet<T> params_;
};

}  // namespace socnn
