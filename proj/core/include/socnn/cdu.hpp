#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "socnn/autodiff.hpp"
#include "socnn/solayers.hpp"

namespace socnn {

/// One covariance descriptor unit: Cov → O2T(dims…) → PV(pv_dim).
struct CduConfig {
  std::vector<std::size_t> o2t_dims;
  std::size_t pv_dim = 64;
  bool mean_augment = true;
  double beta = kDefaultBeta;
  bool robust = false;
  double alpha = kDefaultAlpha;
  bool orthonormal_o2t = false;
  /// ReLU after each position: [Cov, O2T_1 … O2T_k, PV]. Empty selects the
  /// default placement, PV only.
  std::vector<bool> relu_after;

  void validate() const;
  /// relu_after expanded to its k + 2 positions.
  std::vector<bool> relu_flags() const;
};

enum class FusionStage { Vector, Descriptor };
enum class FusionMethod { Sum, Average, Concat };

struct FusionSpec {
  FusionStage stage = FusionStage::Vector;
  FusionMethod method = FusionMethod::Concat;

  /// "V-concat", "D-sum", …
  std::string str() const;
  static FusionSpec parse(const std::string& text);
};

enum class CduLayerKind { Cov, O2T, PV };

struct CduLayer {
  CduLayerKind kind;
  std::size_t din;   ///< input side length (channels for Cov)
  std::size_t dout;  ///< output side length, or vector length for PV
  bool relu = false;
};

/// Resolves a config into its layer chain for `input_channels` features.
std::vector<CduLayer> build_cdu(const CduConfig& cfg, std::size_t input_channels);
/// "Cov(65)-O2T(200)-O2T(100)-O2T(50)-PV(50)"
std::string describe_chain(const std::vector<CduLayer>& chain);

/// n CDUs over equal contiguous channel groups, fused into one vector.
struct CduHeadSpec {
  CduConfig unit;
  std::size_t groups = 1;
  FusionSpec fusion;
};

/// Shape and initialization fans of one trainable matrix of a CDU head.
struct CduParamShape {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::size_t fan_in = 0, fan_out = 0;
  bool stiefel = false;
};

/// Parameters in the order cdu_head_forward consumes them: for each group its
/// O2T weights (and PV weight under vector-space fusion), then the shared PV
/// weight under descriptor-space fusion.
std::vector<CduParamShape> cdu_head_params(const CduHeadSpec& spec, std::size_t input_channels);
std::size_t cdu_head_output_dim(const CduHeadSpec& spec, std::size_t input_channels);

// ---------------------------------------------------------------------------

/// Contiguous channel groups [g·D/n, (g+1)·D/n). Throws ConfigError unless
/// n divides D.
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::size_t n);
template <typename T>
std::vector<Var<T>> split_channels(Var<T> x, std::size_t n);

template <typename T>
BasicTensor<T> fuse_vectors(std::span<const BasicTensor<T>> vs, FusionMethod method);
template <typename T>
Var<T> fuse_vectors(std::span<const Var<T>> vs, FusionMethod method);

/// Sum/average elementwise, or block-diagonal concatenation in group order.
template <typename T>
BasicTensor<T> fuse_descriptors(std::span<const BasicTensor<T>> ms, FusionMethod method);
template <typename T>
Var<T> fuse_descriptors(std::span<const Var<T>> ms, FusionMethod method);

/// Runs a chain up to (not including) PV and returns the descriptor matrix.
/// `o2t_weights` holds one dout×din matrix per O2T layer.
template <typename T>
Var<T> cdu_descriptor(Var<T> x, const CduConfig& cfg, const std::vector<CduLayer>& chain,
                      std::span<const Var<T>> o2t_weights);

/// Full single-unit forward to the PV vector.
template <typename T>
Var<T> cdu_forward(Var<T> x, const CduConfig& cfg, const std::vector<CduLayer>& chain,
                   std::span<const Var<T>> o2t_weights, Var<T> pv_weight);

/// Multi-unit head: split → per-group CDU → fusion. `params` follow the
/// order of cdu_head_params.
template <typename T>
Var<T> cdu_head_forward(Var<T> x, const CduHeadSpec& spec, std::span<const Var<T>> params);

}  // namespace socnn
