#include "socnn/autodiff.hpp"

#include <algorithm>
#include <utility>

namespace socnn {

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var<T> v) const {
  if (v.graph != this) throw GraphError("variable belongs to a different graph");
  if (v.id >= nodes_.size()) throw GraphError("variable id out of range");
  return nodes_[v.id];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var<T> v) {
  return const_cast<Node&>(std::as_const(*this).node(v));
}

template <typename T>
Var<T> Graph<T>::leaf(TensorT value, bool requires_grad) {
  if (backward_done_) throw GraphError("graph already consumed by backward");
  Node n;
  n.op = requires_grad ? "leaf" : "constant";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, std::span<const Var<T>> inputs, TensorT value,
                        BackwardFn backward) {
  if (backward_done_) throw GraphError("graph already consumed by backward");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.graph != this) {
      throw GraphError(std::string(op) + ": input from a different graph");
    }
    needs = needs || nodes_.at(in.id).requires_grad;
  }
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
void Graph<T>::accumulate(Var<T> target, const TensorT& contribution) {
  Node& n = node(target);
  if (!n.requires_grad) return;
  require_same_shape(n.value.shape(), contribution.shape(), "gradient accumulate");
  if (!n.has_grad) {
    n.grad = contribution;
    n.has_grad = true;
  } else {
    add_inplace(n.grad, contribution);
  }
}

template <typename T>
void Graph<T>::accumulate(Var<T> target, TensorT&& contribution) {
  Node& n = node(target);
  if (!n.requires_grad) return;
  require_same_shape(n.value.shape(), contribution.shape(), "gradient accumulate");
  if (!n.has_grad) {
    n.grad = std::move(contribution);
    n.has_grad = true;
  } else {
    add_inplace(n.grad, contribution);
  }
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (backward_done_) {
    throw GraphError("backward called twice on one graph; build a new tape per pass");
  }
  Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " + root.value.shape().str());
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  root.grad = TensorT(root.value.shape(), T{1});
  root.has_grad = true;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

template <typename T>
BasicTensor<T> Graph<T>::grad(Var<T> v) const {
  const Node& n = node(v);
  if (!n.has_grad) return TensorT(n.value.shape());
  return n.grad;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
Graph<T>& graph_of(Var<T> a, Var<T> b, const char* what) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw GraphError(std::string(what) + ": inputs from different graphs");
  }
  return *a.graph;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b, "add");
  return g.record("add", {a, b}, add(a.value(), b.value()),
                  [a, b](Graph<T>& g, const BasicTensor<T>& dy) {
                    g.accumulate(a, dy);
                    g.accumulate(b, dy);
                  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b, "sub");
  return g.record("sub", {a, b}, sub(a.value(), b.value()),
                  [a, b](Graph<T>& g, const BasicTensor<T>& dy) {
                    g.accumulate(a, dy);
                    g.accumulate(b, scale(dy, T{-1}));
                  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return a.graph->record("scale", {a}, scale(a.value(), factor),
                         [a, factor](Graph<T>& g, const BasicTensor<T>& dy) {
                           g.accumulate(a, scale(dy, factor));
                         });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b, "hadamard");
  return g.record("hadamard", {a, b}, hadamard(a.value(), b.value()),
                  [a, b](Graph<T>& g, const BasicTensor<T>& dy) {
                    g.accumulate(a, hadamard(dy, g.value(b)));
                    g.accumulate(b, hadamard(dy, g.value(a)));
                  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b, "matmul");
  return g.record("matmul", {a, b}, matmul(a.value(), b.value()),
                  [a, b](Graph<T>& g, const BasicTensor<T>& dy) {
                    if (g.requires_grad(a)) g.accumulate(a, matmul_nt(dy, g.value(b)));
                    if (g.requires_grad(b)) g.accumulate(b, matmul_tn(g.value(a), dy));
                  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  return a.graph->record("transpose", {a}, transpose(a.value()),
                         [a](Graph<T>& g, const BasicTensor<T>& dy) {
                           g.accumulate(a, transpose(dy));
                         });
}

template <typename T>
Var<T> sum(Var<T> a) {
  BasicTensor<T> out(Shape{1}, sum(a.value()));
  return a.graph->record("sum", {a}, std::move(out),
                         [a](Graph<T>& g, const BasicTensor<T>& dy) {
                           g.accumulate(a, BasicTensor<T>(g.value(a).shape(), dy[0]));
                         });
}

template <typename T>
Var<T> relu(Var<T> a) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return a.graph->record("relu", {a}, std::move(out),
                         [a](Graph<T>& g, const BasicTensor<T>& dy) {
                           const auto& x = g.value(a);
                           BasicTensor<T> dx(x.shape());
                           for (std::size_t i = 0; i < x.numel(); ++i)
                             dx[i] = x[i] > T{0} ? dy[i] : T{0};
                           g.accumulate(a, std::move(dx));
                         });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  return a.graph->record("reshape", {a}, a.value().reshaped(std::move(shape)),
                         [a](Graph<T>& g, const BasicTensor<T>& dy) {
                           g.accumulate(a, dy.reshaped(g.value(a).shape()));
                         });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  require_rank(x.shape(), 2, "slice_cols");
  if (begin > end || end > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t rows = x.rows(), w = end - begin;
  BasicTensor<T> out(Shape{rows, w});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x(i, begin + j);
  return a.graph->record("slice_cols", {a}, std::move(out),
                         [a, begin, w](Graph<T>& g, const BasicTensor<T>& dy) {
                           BasicTensor<T> dx(g.value(a).shape());
                           for (std::size_t i = 0; i < dy.rows(); ++i)
                             for (std::size_t j = 0; j < w; ++j) dx(i, begin + j) = dy(i, j);
                           g.accumulate(a, std::move(dx));
                         });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<T> data;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    require_rank(p.shape(), 1, "concat");
    const auto& v = p.value();
    data.insert(data.end(), v.data().begin(), v.data().end());
    lengths.push_back(v.numel());
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  const std::size_t total = data.size();
  return parts[0].graph->record(
      "concat", parts, BasicTensor<T>(Shape{total}, std::move(data)),
      [inputs, lengths](Graph<T>& g, const BasicTensor<T>& dy) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          BasicTensor<T> d(Shape{lengths[k]});
          std::copy_n(dy.raw() + offset, lengths[k], d.raw());
          g.accumulate(inputs[k], std::move(d));
          offset += lengths[k];
        }
      });
}

template <typename T>
Var<T> block_diag(std::span<const Var<T>> blocks) {
  if (blocks.empty()) throw ShapeError("block_diag: no inputs");
  std::vector<std::size_t> sides;
  std::size_t total = 0;
  for (const auto& b : blocks) {
    const auto& m = b.value();
    require_rank(m.shape(), 2, "block_diag");
    if (m.rows() != m.cols()) throw ShapeError("block_diag: block not square");
    sides.push_back(m.rows());
    total += m.rows();
  }
  BasicTensor<T> out(Shape{total, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& m = blocks[k].value();
    for (std::size_t i = 0; i < sides[k]; ++i)
      for (std::size_t j = 0; j < sides[k]; ++j) out(offset + i, offset + j) = m(i, j);
    offset += sides[k];
  }
  std::vector<Var<T>> inputs(blocks.begin(), blocks.end());
  return blocks[0].graph->record(
      "block_diag", blocks, std::move(out),
      [inputs, sides](Graph<T>& g, const BasicTensor<T>& dy) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          BasicTensor<T> d(Shape{sides[k], sides[k]});
          for (std::size_t i = 0; i < sides[k]; ++i)
            for (std::size_t j = 0; j < sides[k]; ++j) d(i, j) = dy(offset + i, offset + j);
          g.accumulate(inputs[k], std::move(d));
          offset += sides[k];
        }
      });
}

template <typename T>
Var<T> weighted_sum(Var<T> a, const BasicTensor<T>& weights) {
  require_same_shape(a.shape(), weights.shape(), "weighted_sum");
  BasicTensor<T> out(Shape{1}, sum(hadamard(a.value(), weights)));
  return a.graph->record("weighted_sum", {a}, std::move(out),
                         [a, weights](Graph<T>& g, const BasicTensor<T>& dy) {
                           g.accumulate(a, scale(weights, dy[0]));
                         });
}

#define SOCNN_INSTANTIATE(T)                                        \
  template struct Var<T>;                                           \
  template class Graph<T>;                                          \
  template Var<T> add(Var<T>, Var<T>);                              \
  template Var<T> sub(Var<T>, Var<T>);                              \
  template Var<T> scale(Var<T>, T);                                 \
  template Var<T> hadamard(Var<T>, Var<T>);                         \
  template Var<T> matmul(Var<T>, Var<T>);                           \
  template Var<T> transpose(Var<T>);                                \
  template Var<T> sum(Var<T>);                                      \
  template Var<T> relu(Var<T>);                                     \
  template Var<T> reshape(Var<T>, Shape);                           \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);     \
  template Var<T> concat(std::span<const Var<T>>);                  \
  template Var<T> block_diag(std::span<const Var<T>>);              \
  template Var<T> weighted_sum(Var<T>, const BasicTensor<T>&);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
