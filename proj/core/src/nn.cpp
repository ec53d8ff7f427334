#include "socnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace socnn {

namespace {

struct ConvGeometry {
  std::size_t h, w, cin, k_h, k_w, cout, stride, pad_top, pad_left, out_h, out_w;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& weights, const Shape& bias,
                           std::size_t stride, Padding padding) {
  require_rank(x, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  require_rank(bias, 1, "conv2d bias");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.h = x[0];
  g.w = x[1];
  g.cin = x[2];
  g.k_h = weights[0];
  g.k_w = weights[1];
  g.cout = weights[3];
  g.stride = stride;
  if (weights[2] != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) +
                     " channels, weights expect " + std::to_string(weights[2]));
  }
  if (bias[0] != g.cout) throw ShapeError("conv2d: bias length differs from Cout");
  std::size_t span_h = g.h, span_w = g.w;
  if (padding == Padding::Same) {
    g.pad_top = (g.k_h - 1) / 2;
    g.pad_left = (g.k_w - 1) / 2;
    span_h += g.k_h - 1;
    span_w += g.k_w - 1;
  }
  if (span_h < g.k_h || span_w < g.k_w) throw ShapeError("conv2d: kernel larger than input");
  g.out_h = (span_h - g.k_h) / stride + 1;
  g.out_w = (span_w - g.k_w) / stride + 1;
  return g;
}

// Rows: output sites; columns: (ky, kx, ci) matching the weight layout.
template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& x, const ConvGeometry& g) {
  const std::size_t patch = g.k_h * g.k_w * g.cin;
  BasicTensor<T> col(Shape{g.out_h * g.out_w, patch});
  T* out = col.raw();
  for (std::size_t oy = 0; oy < g.out_h; ++oy)
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* row = out + (oy * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          T* dst = row + (ky * g.k_w + kx) * g.cin;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
              ix >= static_cast<std::ptrdiff_t>(g.w)) {
            continue;
          }
          const T* src = x.raw() + (static_cast<std::size_t>(iy) * g.w +
                                    static_cast<std::size_t>(ix)) * g.cin;
          std::copy_n(src, g.cin, dst);
        }
      }
    }
  return col;
}

template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& col, const ConvGeometry& g) {
  const std::size_t patch = g.k_h * g.k_w * g.cin;
  BasicTensor<T> x(Shape{g.h, g.w, g.cin});
  for (std::size_t oy = 0; oy < g.out_h; ++oy)
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* row = col.raw() + (oy * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const T* src = row + (ky * g.k_w + kx) * g.cin;
          T* dst = x.raw() + (static_cast<std::size_t>(iy) * g.w +
                              static_cast<std::size_t>(ix)) * g.cin;
          for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  return x;
}

template <typename T>
BasicTensor<T> conv_apply(const BasicTensor<T>& col, const BasicTensor<T>& weights,
                          const BasicTensor<T>& bias, const ConvGeometry& g) {
  const auto wmat = weights.reshaped(Shape{g.k_h * g.k_w * g.cin, g.cout});
  BasicTensor<T> out = matmul(col, wmat);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < g.cout; ++c) out(r, c) += bias[c];
  return out.reshaped(Shape{g.out_h, g.out_w, g.cout});
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p) {
  const auto g = conv_geometry(x.shape(), p.weights.shape(), p.bias.shape(), p.stride,
                               p.padding);
  return conv_apply(im2col(x, g), p.weights, p.bias, g);
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weights, Var<T> bias, std::size_t stride, Padding padding) {
  const auto g = conv_geometry(x.shape(), weights.shape(), bias.shape(), stride, padding);
  auto col = std::make_shared<BasicTensor<T>>(im2col(x.value(), g));
  auto out = conv_apply(*col, weights.value(), bias.value(), g);
  return x.graph->record(
      "conv2d", {x, weights, bias}, std::move(out),
      [x, weights, bias, g, col](Graph<T>& gr, const BasicTensor<T>& dy) {
        const auto dmat = dy.reshaped(Shape{g.out_h * g.out_w, g.cout});
        if (gr.requires_grad(weights)) {
          gr.accumulate(weights, matmul_tn(*col, dmat).reshaped(gr.value(weights).shape()));
        }
        if (gr.requires_grad(bias)) {
          BasicTensor<T> db(Shape{g.cout});
          for (std::size_t r = 0; r < dmat.rows(); ++r)
            for (std::size_t c = 0; c < g.cout; ++c) db[c] += dmat(r, c);
          gr.accumulate(bias, std::move(db));
        }
        if (gr.requires_grad(x)) {
          const auto wmat =
              gr.value(weights).reshaped(Shape{g.k_h * g.k_w * g.cin, g.cout});
          gr.accumulate(x, col2im(matmul_nt(dmat, wmat), g));
        }
      });
}

template <typename T>
Var<T> maxpool2x2(Var<T> x) {
  const auto& in = x.value();
  require_rank(in.shape(), 3, "maxpool2x2");
  const std::size_t h = in.shape()[0], w = in.shape()[1], c = in.shape()[2];
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  BasicTensor<T> out(Shape{oh, ow, c});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = 2 * oy + dy, ix = 2 * ox + dx;
            if (iy >= h || ix >= w) continue;
            const std::size_t idx = (iy * w + ix) * c + ch;
            if (!found || in[idx] > best) {
              best = in[idx];
              best_idx = idx;
              found = true;
            }
          }
        const std::size_t o = (oy * ow + ox) * c + ch;
        out[o] = best;
        argmax[o] = best_idx;
      }
  return x.graph->record("maxpool2x2", {x}, std::move(out),
                         [x, argmax = std::move(argmax)](Graph<T>& g, const BasicTensor<T>& dy) {
                           BasicTensor<T> dx(g.value(x).shape());
                           for (std::size_t o = 0; o < dy.numel(); ++o) dx[argmax[o]] += dy[o];
                           g.accumulate(x, std::move(dx));
                         });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> weights, Var<T> bias) {
  const auto& xv = x.value();
  const auto& wv = weights.value();
  require_rank(xv.shape(), 1, "dense input");
  require_rank(wv.shape(), 2, "dense weights");
  require_rank(bias.shape(), 1, "dense bias");
  const std::size_t din = wv.rows(), dout = wv.cols();
  if (xv.numel() != din) {
    throw ShapeError("dense: input length " + std::to_string(xv.numel()) + " vs weights " +
                     wv.shape().str());
  }
  if (bias.value().numel() != dout) throw ShapeError("dense: bias length differs from Dout");
  BasicTensor<T> out = bias.value();
  for (std::size_t i = 0; i < din; ++i) {
    const T xi = xv[i];
    const T* row = wv.raw() + i * dout;
    for (std::size_t j = 0; j < dout; ++j) out[j] += xi * row[j];
  }
  return x.graph->record(
      "dense", {x, weights, bias}, std::move(out),
      [x, weights, bias, din, dout](Graph<T>& g, const BasicTensor<T>& dy) {
        const auto& xv = g.value(x);
        const auto& wv = g.value(weights);
        if (g.requires_grad(weights)) {
          BasicTensor<T> dw(Shape{din, dout});
          for (std::size_t i = 0; i < din; ++i)
            for (std::size_t j = 0; j < dout; ++j) dw(i, j) = xv[i] * dy[j];
          g.accumulate(weights, std::move(dw));
        }
        g.accumulate(bias, dy);
        if (g.requires_grad(x)) {
          BasicTensor<T> dx(Shape{din});
          for (std::size_t i = 0; i < din; ++i) {
            const T* row = wv.raw() + i * dout;
            T acc{0};
            for (std::size_t j = 0; j < dout; ++j) acc += row[j] * dy[j];
            dx[i] = acc;
          }
          g.accumulate(x, std::move(dx));
        }
      });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 1, "softmax");
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  const T m = *std::max_element(logits.data().begin(), logits.data().end());
  BasicTensor<T> p(logits.shape());
  T z{0};
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p.data()) v /= z;
  return p;
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::size_t label) {
  const auto& z = logits.value();
  require_rank(z.shape(), 1, "softmax_cross_entropy");
  if (label >= z.numel()) {
    throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) +
                      " out of range for " + std::to_string(z.numel()) + " classes");
  }
  const T m = *std::max_element(z.data().begin(), z.data().end());
  T lse{0};
  for (T v : z.data()) lse += std::exp(v - m);
  lse = std::log(lse) + m;
  BasicTensor<T> loss(Shape{1}, lse - z[label]);
  return logits.graph->record("softmax_cross_entropy", {logits}, std::move(loss),
                              [logits, label](Graph<T>& g, const BasicTensor<T>& dy) {
                                auto p = softmax(g.value(logits));
                                p[label] -= T{1};
                                g.accumulate(logits, scale(p, dy[0]));
                              });
}

#define SOCNN_INSTANTIATE(T)                                                         \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const Conv2dParams<T>&); \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, Padding);              \
  template Var<T> maxpool2x2(Var<T>);                                                \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                     \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                            \
  template Var<T> softmax_cross_entropy(Var<T>, std::size_t);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
