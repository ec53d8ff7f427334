#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "socnn/errors.hpp"

namespace socnn {

/// Ordered list of extents. The element count of a rank-0 shape is 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const;
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Dense row-major array. The last index varies fastest.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{0} {}
  explicit BasicTensor(Shape shape, T fill = T{});
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor vector(std::initializer_list<T> values);
  static BasicTensor matrix(std::initializer_list<std::initializer_list<T>> rows);
  static BasicTensor zeros(std::size_t rows, std::size_t cols) {
    return BasicTensor(Shape{rows, cols});
  }
  static BasicTensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix accessors; require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_.dims().back() + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_.dims().back() + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same buffer under a new shape with identical element count.
  BasicTensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

/// W×H×D activation map to an N×D matrix with N = W·H. Row k is the fiber at
/// spatial site k in row-major spatial order.
template <typename T>
BasicTensor<T> reshape_activations(const BasicTensor<T>& act);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// aᵀ·b without materializing the transpose.
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// a·bᵀ without materializing the transpose.
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> elementwise_map(const BasicTensor<T>& a, const std::function<T(T)>& f);

/// (A + Aᵀ) / 2 for a square matrix.
template <typename T>
BasicTensor<T> symmetrize(const BasicTensor<T>& a);

/// acc += x, shapes must agree.
template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);
/// acc += factor · x.
template <typename T>
void axpy_inplace(BasicTensor<T>& acc, T factor, const BasicTensor<T>& x);

template <typename T>
T sum(const BasicTensor<T>& a);
template <typename T>
T frobenius_norm(const BasicTensor<T>& a);
/// max |a_i − b_i|; shapes must agree.
template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
bool all_finite(const BasicTensor<T>& a);

void require_same_shape(const Shape& a, const Shape& b, const char* what);
void require_rank(const Shape& s, std::size_t rank, const char* what);

}  // namespace socnn
