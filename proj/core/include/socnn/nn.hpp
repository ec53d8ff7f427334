#pragma once

#include <cstddef>

#include "socnn/autodiff.hpp"

namespace socnn {

enum class Padding { Same, Valid };

/// Convolution weights stored kH×kW×Cin×Cout, bias Cout. Cross-correlation
/// (no kernel flip) over H×W×C activations.
template <typename T>
struct Conv2dParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  std::size_t stride = 1;
  Padding padding = Padding::Same;
};

/// Weights Din×Dout, bias Dout.
template <typename T>
struct DenseParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p);

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weights, Var<T> bias, std::size_t stride = 1,
              Padding padding = Padding::Same);

/// 2×2 max-pooling with stride 2. Odd extents are padded with −∞ on the
/// bottom/right. The gradient is routed to the first maximal entry in
/// window scan order.
template <typename T>
Var<T> maxpool2x2(Var<T> x);

/// y = xᵀW + b for a rank-1 x.
template <typename T>
Var<T> dense(Var<T> x, Var<T> weights, Var<T> bias);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// −log softmax(logits)[label], computed with max subtraction.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::size_t label);

}  // namespace socnn
