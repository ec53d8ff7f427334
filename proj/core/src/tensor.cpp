#include "socnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace socnn {

std::size_t Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << "x";
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + s.str());
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor: buffer of " + std::to_string(data_.size()) +
                     " elements does not fit shape " + shape_.str());
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::vector(std::initializer_list<T> values) {
  return BasicTensor(Shape{values.size()}, std::vector<T>(values));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return BasicTensor(Shape{r, c}, std::move(data));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::identity(std::size_t n) {
  BasicTensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
  return out;
}

template <typename T>
std::size_t BasicTensor<T>::rows() const {
  require_rank(shape_, 2, "rows");
  return shape_[0];
}

template <typename T>
std::size_t BasicTensor<T>::cols() const {
  require_rank(shape_, 2, "cols");
  return shape_[1];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ShapeError("reshape: " + shape_.str() + " -> " + shape.str() +
                     " changes element count");
  }
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> reshape_activations(const BasicTensor<T>& act) {
  require_rank(act.shape(), 3, "reshape_activations");
  const auto& d = act.shape().dims();
  return act.reshaped(Shape{d[0] * d[1], d[2]});
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  if (b.rows() != m) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape().str() + " * " +
                     b.shape().str());
  }
  BasicTensor<T> out(Shape{n, p});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = po + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const T aik = pa[i * m + k];
      const T* brow = pb + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "matmul_tn");
  require_rank(b.shape(), 2, "matmul_tn");
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != m) {
    throw ShapeError("matmul_tn: row counts differ " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  BasicTensor<T> out(Shape{n, p});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  for (std::size_t k = 0; k < m; ++k) {
    const T* arow = pa + k * n;
    const T* brow = pb + k * p;
    for (std::size_t i = 0; i < n; ++i) {
      const T aki = arow[i];
      T* orow = po + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "matmul_nt");
  require_rank(b.shape(), 2, "matmul_nt");
  const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
  if (b.cols() != m) {
    throw ShapeError("matmul_nt: column counts differ " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  BasicTensor<T> out(Shape{n, p});
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = pa + i * m;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = pb + j * m;
      T acc{0};
      for (std::size_t k = 0; k < m; ++k) acc += arow[k] * brow[k];
      po[i * p + j] = acc;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  BasicTensor<T> out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

namespace {

template <typename T, typename Op>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what, Op op) {
  require_same_shape(a.shape(), b.shape(), what);
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = op(a[i], b[i]);
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, "add", std::plus<T>());
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, "sub", std::minus<T>());
}

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return zip(a, b, "hadamard", std::multiplies<T>());
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

template <typename T>
BasicTensor<T> elementwise_map(const BasicTensor<T>& a, const std::function<T(T)>& f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T>
BasicTensor<T> symmetrize(const BasicTensor<T>& a) {
  require_rank(a.shape(), 2, "symmetrize");
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("symmetrize: matrix not square " + a.shape().str());
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (a(i, j) + a(j, i)) / T{2};
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  require_same_shape(acc.shape(), x.shape(), "add_inplace");
  T* pa = acc.raw();
  const T* px = x.raw();
  for (std::size_t i = 0; i < acc.numel(); ++i) pa[i] += px[i];
}

template <typename T>
void axpy_inplace(BasicTensor<T>& acc, T factor, const BasicTensor<T>& x) {
  require_same_shape(acc.shape(), x.shape(), "axpy_inplace");
  T* pa = acc.raw();
  const T* px = x.raw();
  for (std::size_t i = 0; i < acc.numel(); ++i) pa[i] += factor * px[i];
}

template <typename T>
T sum(const BasicTensor<T>& a) {
  T acc{0};
  for (T v : a.data()) acc += v;
  return acc;
}

template <typename T>
T frobenius_norm(const BasicTensor<T>& a) {
  T acc{0};
  for (T v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
bool all_finite(const BasicTensor<T>& a) {
  return std::all_of(a.data().begin(), a.data().end(),
                     [](T v) { return std::isfinite(v); });
}

#define SOCNN_INSTANTIATE(T)                                                              \
  template class BasicTensor<T>;                                                          \
  template BasicTensor<T> reshape_activations(const BasicTensor<T>&);                     \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                               \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                \
  template BasicTensor<T> hadamard(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> elementwise_map(const BasicTensor<T>&, const std::function<T(T)>&); \
  template BasicTensor<T> symmetrize(const BasicTensor<T>&);                              \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                      \
  template void axpy_inplace(BasicTensor<T>&, T, const BasicTensor<T>&);                  \
  template T sum(const BasicTensor<T>&);                                                  \
  template T frobenius_norm(const BasicTensor<T>&);                                       \
  template T max_abs_diff(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template bool all_finite(const BasicTensor<T>&);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
