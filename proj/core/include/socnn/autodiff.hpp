#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "socnn/tensor.hpp"

namespace socnn {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Define-by-run reverse-mode tape. Nodes are appended in creation order and
/// backward visits them in strict reverse order. A graph serves a single
/// backward pass; a second call throws GraphError. Parameter gradients are
/// accumulated outside the graph (see Parameter/ParamSet) and must be reset
/// explicitly between steps.
template <typename T>
class Graph {
 public:
  using TensorT = BasicTensor<T>;
  /// Receives the upstream gradient of the node and pushes contributions to
  /// the node's inputs through accumulate().
  using BackwardFn = std::function<void(Graph&, const TensorT& upstream)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> leaf(TensorT value, bool requires_grad = true);
  Var<T> constant(TensorT value) { return leaf(std::move(value), false); }

  /// Appends an operation node. The node requires a gradient iff any input
  /// does; otherwise the backward rule is dropped.
  Var<T> record(std::string_view op, std::span<const Var<T>> inputs, TensorT value,
                BackwardFn backward);
  Var<T> record(std::string_view op, std::initializer_list<Var<T>> inputs, TensorT value,
                BackwardFn backward) {
    return record(op, std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(value), std::move(backward));
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every stored backward rule.
  void backward(Var<T> loss);

  /// Adds a gradient contribution to `target`; ignored for constants.
  void accumulate(Var<T> target, const TensorT& contribution);
  void accumulate(Var<T> target, TensorT&& contribution);

  const TensorT& value(Var<T> v) const { return node(v).value; }
  /// Gradient after backward; zeros for nodes the loss does not reach.
  TensorT grad(Var<T> v) const;
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  std::string_view op(Var<T> v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    std::string op;
    TensorT value;
    TensorT grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var<T> v) const;
  Node& node(Var<T> v);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return graph->value(*this);
}

// Elementary differentiable operations. All inputs must share one graph.

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);
/// Scalar (shape {1}) sum of all elements.
template <typename T>
Var<T> sum(Var<T> a);
/// max(x, 0); the subgradient at 0 is 0.
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
/// Columns [begin, end) of a matrix.
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end);
/// Concatenation of rank-1 tensors in argument order.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts);
/// Block-diagonal matrix with the given square blocks on the diagonal.
template <typename T>
Var<T> block_diag(std::span<const Var<T>> blocks);
/// sum(weights ⊙ a) with constant weights; a scalar projection used by
/// gradient checks to reduce a tensor-valued layer to a loss.
template <typename T>
Var<T> weighted_sum(Var<T> a, const BasicTensor<T>& weights);

}  // namespace socnn
