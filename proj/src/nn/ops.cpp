#include "goalnav/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace goalnav::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigurationError(message);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_string(a) +
                      " vs " + shape_string(b));
}

template <typename T>
Node<T>* input_needing_grad(Node<T>& self, std::size_t i) {
  Node<T>* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& a, Fwd fwd, Deriv deriv) {
  BasicTensor<T> out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result<T>(std::move(out), {a}, [deriv](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * deriv(in->value[i], self.value[i]);
      }
    }
  });
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, padding;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t pixels() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(std::size_t c, std::size_t h, std::size_t w,
                           std::size_t k, int stride, int padding) {
  require(stride > 0 && padding >= 0, "conv: stride must be positive and padding non-negative");
  require(k <= h + 2 * static_cast<std::size_t>(padding) &&
              k <= w + 2 * static_cast<std::size_t>(padding),
          "conv: kernel larger than padded input");
  ConvGeometry g{c, h, w, k, 0, 0, stride, padding};
  g.out_h = (h + 2 * padding - k) / stride + 1;
  g.out_w = (w + 2 * padding - k) / stride + 1;
  return g;
}

// cols has patch() rows and `ld` columns; sample occupies columns
// [col0, col0 + pixels()).
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols, std::size_t ld,
            std::size_t col0) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * ld + col0;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + static_cast<long>(ki) - g.padding;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + ih * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kj) - g.padding;
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t ld,
            std::size_t col0, T* image) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * ld + col0;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + static_cast<long>(ki) - g.padding;
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* dst = plane + ih * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kj) - g.padding;
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Number of samples processed per GEMM so the column buffer stays bounded.
std::size_t conv_chunk(const ConvGeometry& g, std::size_t batch) {
  constexpr std::size_t kMaxColElements = std::size_t{1} << 23;
  const std::size_t per = std::max<std::size_t>(1, g.patch() * g.pixels());
  return std::clamp<std::size_t>(kMaxColElements / per, 1, batch);
}

// Shared forward for conv2d/conv3d: `images` holds `batch` images of
// geometry g at stride `in_stride`; output rows are written at `out_stride`.
template <typename T>
void conv_forward(const T* images, std::size_t batch, std::size_t in_stride,
                  const ConvGeometry& g, const T* weight, std::size_t out_ch,
                  T* out, std::size_t out_stride) {
  const std::size_t pix = g.pixels();
  const std::size_t chunk = conv_chunk(g, batch);
  std::vector<T> cols(g.patch() * chunk * pix);
  RowMat<T> result;
  ConstMatMap<T> w(weight, out_ch, g.patch());
  for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - n0);
    const std::size_t ld = nb * pix;
    for (std::size_t b = 0; b < nb; ++b) {
      im2col(images + (n0 + b) * in_stride, g, cols.data(), ld, b * pix);
    }
    ConstMatMap<T> cm(cols.data(), g.patch(), ld);
    result.noalias() = w * cm;
    for (std::size_t b = 0; b < nb; ++b) {
      T* dst = out + (n0 + b) * out_stride;
      for (std::size_t o = 0; o < out_ch; ++o) {
        const T* src = result.data() + o * ld + b * pix;
        T* d = dst + o * pix;
        for (std::size_t p = 0; p < pix; ++p) d[p] += src[p];
      }
    }
  }
}

template <typename T>
void conv_backward(const T* images, std::size_t batch, std::size_t in_stride,
                   const ConvGeometry& g, const T* weight, std::size_t out_ch,
                   const T* grad_out, std::size_t out_stride, T* grad_images,
                   T* grad_weight) {
  const std::size_t pix = g.pixels();
  const std::size_t chunk = conv_chunk(g, batch);
  std::vector<T> cols(g.patch() * chunk * pix);
  RowMat<T> dy(out_ch, chunk * pix);
  RowMat<T> dcols;
  ConstMatMap<T> w(weight, out_ch, g.patch());
  for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - n0);
    const std::size_t ld = nb * pix;
    dy.resize(out_ch, ld);
    for (std::size_t b = 0; b < nb; ++b) {
      const T* src = grad_out + (n0 + b) * out_stride;
      for (std::size_t o = 0; o < out_ch; ++o) {
        std::copy_n(src + o * pix, pix, dy.data() + o * ld + b * pix);
      }
    }
    if (grad_weight) {
      for (std::size_t b = 0; b < nb; ++b) {
        im2col(images + (n0 + b) * in_stride, g, cols.data(), ld, b * pix);
      }
      ConstMatMap<T> cm(cols.data(), g.patch(), ld);
      MatMap<T> gw(grad_weight, out_ch, g.patch());
      gw.noalias() += dy * cm.transpose();
    }
    if (grad_images) {
      dcols.noalias() = w.transpose() * dy;
      for (std::size_t b = 0; b < nb; ++b) {
        col2im(dcols.data(), g, ld, b * pix, grad_images + (n0 + b) * in_stride);
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* in = input_needing_grad(self, k)) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto* in = input_needing_grad(self, 1)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>* x = self.inputs[0].get();
    Node<T>* y = self.inputs[1].get();
    if (x->requires_grad) {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y->value[i];
    }
    if (y->requires_grad) {
      auto& g = y->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary<T>(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  return unary<T>(
      a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary<T>(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return unary<T>(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x < lo || x > hi) ? T(0) : T(1); });
}

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "minimum");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(a.value()[i], b.value()[i]);
  }
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>* x = self.inputs[0].get();
    Node<T>* y = self.inputs[1].get();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool take_a = x->value[i] <= y->value[i];
      Node<T>* dst = take_a ? x : y;
      if (dst->requires_grad) dst->grad_buffer()[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  require(shape_size(shape) == a.size(),
          "reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  return make_result<T>(a.value().reshaped(std::move(shape)), {a}, [](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().data()) acc += v;
  return make_result<T>(BasicTensor<T>({1}, static_cast<T>(acc)), {a}, [](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(x.value().rank() == 2 && weight.value().rank() == 2,
          "linear: expects N x D input and D_out x D_in weight");
  const std::size_t n = x.dim(0), d_in = x.dim(1), d_out = weight.dim(0);
  require(weight.dim(1) == d_in, "linear: input width " + std::to_string(d_in) +
                                     " does not match weight " +
                                     shape_string(weight.shape()));
  const bool has_bias = bias.defined();
  require(!has_bias || bias.size() == d_out, "linear: bias size mismatch");
  BasicTensor<T> out({n, d_out});
  MatMap<T> y(out.raw(), n, d_out);
  ConstMatMap<T> xm(x.value().raw(), n, d_in);
  ConstMatMap<T> wm(weight.value().raw(), d_out, d_in);
  y.noalias() = xm * wm.transpose();
  if (has_bias) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d_out; ++c) y(r, c) += bias.value()[c];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [n, d_in, d_out](Node<T>& self) {
    ConstMatMap<T> gy(self.grad.raw(), n, d_out);
    Node<T>* xn = self.inputs[0].get();
    Node<T>* wn = self.inputs[1].get();
    if (xn->requires_grad) {
      MatMap<T> gx(xn->grad_buffer().raw(), n, d_in);
      gx.noalias() += gy * ConstMatMap<T>(wn->value.raw(), d_out, d_in);
    }
    if (wn->requires_grad) {
      MatMap<T> gw(wn->grad_buffer().raw(), d_out, d_in);
      gw.noalias() += gy.transpose() * ConstMatMap<T>(xn->value.raw(), n, d_in);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& gb = self.inputs[2]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d_out; ++c) gb[c] += gy(r, c);
      }
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int stride, int padding) {
  const auto& xs = input.shape();
  require(xs.size() == 3 || xs.size() == 4, "conv2d: input must be C x H x W or N x C x H x W");
  require(weight.value().rank() == 4 && weight.dim(2) == weight.dim(3),
          "conv2d: weight must be C_out x C_in x k x k");
  const bool batched = xs.size() == 4;
  const std::size_t n = batched ? xs[0] : 1;
  const std::size_t c = xs[xs.size() - 3], h = xs[xs.size() - 2], w = xs[xs.size() - 1];
  require(weight.dim(1) == c, "conv2d: input has " + std::to_string(c) +
                                  " channels but weight expects " +
                                  std::to_string(weight.dim(1)));
  const std::size_t out_ch = weight.dim(0);
  const bool has_bias = bias.defined();
  require(!has_bias || bias.size() == out_ch, "conv2d: bias size mismatch");
  const ConvGeometry g = conv_geometry(c, h, w, weight.dim(2), stride, padding);

  Shape out_shape = batched ? Shape{n, out_ch, g.out_h, g.out_w}
                            : Shape{out_ch, g.out_h, g.out_w};
  BasicTensor<T> out(out_shape);
  const std::size_t out_stride = out_ch * g.pixels();
  if (has_bias) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        std::fill_n(out.raw() + b * out_stride + o * g.pixels(), g.pixels(), bias.value()[o]);
      }
    }
  }
  conv_forward(input.value().raw(), n, c * h * w, g, weight.value().raw(), out_ch,
               out.raw(), out_stride);

  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [g, n, out_ch, out_stride](Node<T>& self) {
    Node<T>* xn = self.inputs[0].get();
    Node<T>* wn = self.inputs[1].get();
    conv_backward(xn->value.raw(), n, g.channels * g.height * g.width, g, wn->value.raw(),
                  out_ch, self.grad.raw(), out_stride,
                  xn->requires_grad ? xn->grad_buffer().raw() : nullptr,
                  wn->requires_grad ? wn->grad_buffer().raw() : nullptr);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& gb = self.inputs[2]->grad_buffer();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < out_ch; ++o) {
          const T* src = self.grad.raw() + b * out_stride + o * g.pixels();
          T acc = 0;
          for (std::size_t p = 0; p < g.pixels(); ++p) acc += src[p];
          gb[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int stride, int padding, int depth_padding) {
  const auto& xs = input.shape();
  require(xs.size() == 5, "conv3d: input must be N x D x C x H x W");
  require(weight.value().rank() == 5 && weight.dim(3) == weight.dim(4),
          "conv3d: weight must be C_out x C x KD x k x k");
  const std::size_t n = xs[0], depth = xs[1], c = xs[2], h = xs[3], w = xs[4];
  require(weight.dim(1) == c, "conv3d: channel mismatch");
  const std::size_t out_ch = weight.dim(0), kd = weight.dim(2), k = weight.dim(3);
  require(depth + 2 * depth_padding >= kd, "conv3d: depth kernel larger than padded depth");
  const std::size_t out_depth = depth + 2 * depth_padding - kd + 1;
  const bool has_bias = bias.defined();
  require(!has_bias || bias.size() == out_ch, "conv3d: bias size mismatch");
  const ConvGeometry g = conv_geometry(c, h, w, k, stride, padding);

  // Per depth tap, extract the 2-D kernel slice C_out x C x k x k.
  auto kernel_slice = [=](const BasicTensor<T>& wt, std::size_t tap) {
    BasicTensor<T> s({out_ch, c, k, k});
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        const T* src = wt.raw() + (((o * c + ci) * kd + tap) * k * k);
        std::copy_n(src, k * k, s.raw() + (o * c + ci) * k * k);
      }
    }
    return s;
  };

  const std::size_t pix = g.pixels();
  const std::size_t img = c * h * w;
  BasicTensor<T> out({n, out_depth, out_ch, g.out_h, g.out_w});
  const std::size_t slab = out_ch * pix;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t od = 0; od < out_depth; ++od) {
      T* dst = out.raw() + (b * out_depth + od) * slab;
      if (has_bias) {
        for (std::size_t o = 0; o < out_ch; ++o) std::fill_n(dst + o * pix, pix, bias.value()[o]);
      }
    }
  }
  for (std::size_t tap = 0; tap < kd; ++tap) {
    const BasicTensor<T> ws = kernel_slice(weight.value(), tap);
    for (std::size_t od = 0; od < out_depth; ++od) {
      const long id = static_cast<long>(od + tap) - depth_padding;
      if (id < 0 || id >= static_cast<long>(depth)) continue;
      conv_forward(input.value().raw() + id * img, n, depth * img, g, ws.raw(), out_ch,
                   out.raw() + od * slab, out_depth * slab);
    }
  }

  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      std::move(out), inputs,
      [=](Node<T>& self) {
        Node<T>* xn = self.inputs[0].get();
        Node<T>* wn = self.inputs[1].get();
        for (std::size_t tap = 0; tap < kd; ++tap) {
          const BasicTensor<T> ws = kernel_slice(wn->value, tap);
          BasicTensor<T> gws(ws.shape());
          for (std::size_t od = 0; od < out_depth; ++od) {
            const long id = static_cast<long>(od + tap) - depth_padding;
            if (id < 0 || id >= static_cast<long>(depth)) continue;
            conv_backward(xn->value.raw() + id * img, n, depth * img, g, ws.raw(), out_ch,
                          self.grad.raw() + od * slab, out_depth * slab,
                          xn->requires_grad ? xn->grad_buffer().raw() + id * img : nullptr,
                          wn->requires_grad ? gws.raw() : nullptr);
          }
          if (wn->requires_grad) {
            auto& gw = wn->grad_buffer();
            for (std::size_t o = 0; o < out_ch; ++o) {
              for (std::size_t ci = 0; ci < c; ++ci) {
                T* dst = gw.raw() + (((o * c + ci) * kd + tap) * k * k);
                const T* src = gws.raw() + (o * c + ci) * k * k;
                for (std::size_t q = 0; q < k * k; ++q) dst[q] += src[q];
              }
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (std::size_t s = 0; s < n * out_depth; ++s) {
            for (std::size_t o = 0; o < out_ch; ++o) {
              const T* src = self.grad.raw() + s * slab + o * pix;
              T acc = 0;
              for (std::size_t p = 0; p < pix; ++p) acc += src[p];
              gb[o] += acc;
            }
          }
        }
      });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  int groups, T eps) {
  const auto& xs = x.shape();
  require(xs.size() >= 2, "group_norm: input must be N x C x ...");
  const std::size_t n = xs[0], c = xs[1];
  const std::size_t spatial = x.size() / (n * c);
  require(groups > 0 && c % static_cast<std::size_t>(groups) == 0,
          "group_norm: " + std::to_string(c) + " channels not divisible into " +
              std::to_string(groups) + " groups");
  require(gamma.size() == c && beta.size() == c, "group_norm: affine size mismatch");
  const std::size_t cg = c / groups;
  const std::size_t group_len = cg * spatial;

  BasicTensor<T> out(xs);
  std::vector<T> means(n * groups), inv_stds(n * groups);
  for (std::size_t b = 0; b < n; ++b) {
    for (int gi = 0; gi < groups; ++gi) {
      const T* src = x.value().raw() + (b * c + gi * cg) * spatial;
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) s += src[i];
      const double mu = s / group_len;
      for (std::size_t i = 0; i < group_len; ++i) {
        const double d = src[i] - mu;
        s2 += d * d;
      }
      const double inv = 1.0 / std::sqrt(s2 / group_len + static_cast<double>(eps));
      means[b * groups + gi] = static_cast<T>(mu);
      inv_stds[b * groups + gi] = static_cast<T>(inv);
      T* dst = out.raw() + (b * c + gi * cg) * spatial;
      for (std::size_t ci = 0; ci < cg; ++ci) {
        const T gm = gamma.value()[gi * cg + ci], bt = beta.value()[gi * cg + ci];
        for (std::size_t p = 0; p < spatial; ++p) {
          const std::size_t i = ci * spatial + p;
          dst[i] = static_cast<T>((src[i] - mu) * inv) * gm + bt;
        }
      }
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [=, means = std::move(means), inv_stds = std::move(inv_stds)](Node<T>& self) {
        Node<T>* xn = self.inputs[0].get();
        Node<T>* gn = self.inputs[1].get();
        Node<T>* bn = self.inputs[2].get();
        std::vector<T> xhat(group_len), dxhat(group_len);
        for (std::size_t b = 0; b < n; ++b) {
          for (int gi = 0; gi < groups; ++gi) {
            const T mu = means[b * groups + gi], inv = inv_stds[b * groups + gi];
            const std::size_t off = (b * c + gi * cg) * spatial;
            const T* src = xn->value.raw() + off;
            const T* dy = self.grad.raw() + off;
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t ci = 0; ci < cg; ++ci) {
              const std::size_t ch = gi * cg + ci;
              const T gm = gn->value[ch];
              double dgamma = 0.0, dbeta = 0.0;
              for (std::size_t p = 0; p < spatial; ++p) {
                const std::size_t i = ci * spatial + p;
                xhat[i] = (src[i] - mu) * inv;
                dxhat[i] = dy[i] * gm;
                dgamma += static_cast<double>(dy[i]) * xhat[i];
                dbeta += dy[i];
                sum_dxhat += dxhat[i];
                sum_dxhat_xhat += static_cast<double>(dxhat[i]) * xhat[i];
              }
              if (gn->requires_grad) gn->grad_buffer()[ch] += static_cast<T>(dgamma);
              if (bn->requires_grad) bn->grad_buffer()[ch] += static_cast<T>(dbeta);
            }
            if (xn->requires_grad) {
              T* dx = xn->grad_buffer().raw() + off;
              const double m1 = sum_dxhat / group_len, m2 = sum_dxhat_xhat / group_len;
              for (std::size_t i = 0; i < group_len; ++i) {
                dx[i] += static_cast<T>(inv * (dxhat[i] - m1 - xhat[i] * m2));
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> film_affine(const Var<T>& z, const Var<T>& gamma, const Var<T>& beta) {
  const auto& zs = z.shape();
  require(zs.size() == 3 || zs.size() == 4, "film_affine: z must be C x H x W or N x C x H x W");
  require(gamma.shape() == beta.shape(), "film_affine: gamma and beta shapes differ");
  const bool batched = zs.size() == 4;
  const std::size_t n = batched ? zs[0] : 1;
  const std::size_t c = zs[zs.size() - 3];
  const std::size_t spatial = zs[zs.size() - 2] * zs[zs.size() - 1];
  const bool full = gamma.shape() == zs;
  const Shape per_channel = batched ? Shape{n, c} : Shape{c};
  require(full || gamma.shape() == per_channel,
          "film_affine: factors " + shape_string(gamma.shape()) +
              " incompatible with activation " + shape_string(zs));
  auto factor_index = [=](std::size_t i) {
    return full ? i : i / spatial;  // (b * c + ch) for per-channel factors
  };
  BasicTensor<T> out(zs);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t f = factor_index(i);
    out[i] = gamma.value()[f] * z.value()[i] + beta.value()[f];
  }
  (void)n;
  return make_result<T>(std::move(out), {z, gamma, beta}, [factor_index](Node<T>& self) {
    Node<T>* zn = self.inputs[0].get();
    Node<T>* gn = self.inputs[1].get();
    Node<T>* bn = self.inputs[2].get();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::size_t f = factor_index(i);
      const T dy = self.grad[i];
      if (zn->requires_grad) zn->grad_buffer()[i] += dy * gn->value[f];
      if (gn->requires_grad) gn->grad_buffer()[f] += dy * zn->value[i];
      if (bn->requires_grad) bn->grad_buffer()[f] += dy;
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require(x.value().rank() == 4, "global_avg_pool: expects N x C x H x W");
  const std::size_t n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  BasicTensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < spatial; ++p) acc += x.value()[i * spatial + p];
    out[i] = static_cast<T>(acc / spatial);
  }
  return make_result<T>(std::move(out), {x}, [spatial](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      const T inv = T(1) / static_cast<T>(spatial);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        for (std::size_t p = 0; p < spatial; ++p) g[i * spatial + p] += self.grad[i] * inv;
      }
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.value().rank() == 2 && p.dim(0) == n, "concat_cols: expects N x D inputs with equal N");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  BasicTensor<T> out({n, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(parts[k].value().raw() + r * widths[k], widths[k], out.raw() + r * total + col);
    }
    col += widths[k];
  }
  return make_result<T>(std::move(out), parts, [n, total, widths](Node<T>& self) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* in = input_needing_grad(self, k)) {
        auto& g = in->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) {
            g[r * widths[k] + j] += self.grad[r * total + col + j];
          }
        }
      }
      col += widths[k];
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require(Shape(p.shape().begin() + 1, p.shape().end()) == tail,
            "concat_rows: trailing dimensions differ");
    rows += p.dim(0);
    sizes.push_back(p.size());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  BasicTensor<T> out(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().raw(), p.size(), out.raw() + off);
    off += p.size();
  }
  return make_result<T>(std::move(out), parts, [sizes](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (auto* in = input_needing_grad(self, k)) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count) {
  require(a.value().rank() >= 1 && start + count <= a.dim(0), "slice_rows: range out of bounds");
  const std::size_t row = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  BasicTensor<T> out(shape);
  std::copy_n(a.value().raw() + start * row, count * row, out.raw());
  return make_result<T>(std::move(out), {a}, [start, row](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      T* g = in->grad_buffer().raw() + start * row;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sum_axis1(const Var<T>& a) {
  require(a.value().rank() >= 2, "sum_axis1: rank must be at least 2");
  const std::size_t n = a.dim(0), d = a.dim(1);
  const std::size_t m = a.size() / (n * d);
  Shape shape{n};
  shape.insert(shape.end(), a.shape().begin() + 2, a.shape().end());
  BasicTensor<T> out(shape);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < d; ++k) {
      const T* src = a.value().raw() + (b * d + k) * m;
      T* dst = out.raw() + b * m;
      for (std::size_t i = 0; i < m; ++i) dst[i] += src[i];
    }
  }
  return make_result<T>(std::move(out), {a}, [n, d, m](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t k = 0; k < d; ++k) {
          for (std::size_t i = 0; i < m; ++i) g[(b * d + k) * m + i] += self.grad[b * m + i];
        }
      }
    }
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const int> indices) {
  require(table.value().rank() == 2, "embedding: table must be V x E");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  BasicTensor<T> out({idx.size(), width});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && static_cast<std::size_t>(idx[r]) < vocab, "embedding: index out of range");
    std::copy_n(table.value().raw() + idx[r] * width, width, out.raw() + r * width);
  }
  return make_result<T>(std::move(out), {table}, [idx, width](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < width; ++j) g[idx[r] * width + j] += self.grad[r * width + j];
      }
    }
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& logits) {
  require(logits.value().rank() == 2, "log_softmax: expects N x K");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> out({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = logits.value().raw() + r * k;
    const T mx = *std::max_element(x, x + k);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(static_cast<double>(x[j] - mx));
    const T lse = mx + static_cast<T>(std::log(acc));
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = x[j] - lse;
  }
  return make_result<T>(std::move(out), {logits}, [n, k](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        T total = 0;
        for (std::size_t j = 0; j < k; ++j) total += self.grad[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          g[r * k + j] += self.grad[r * k + j] - std::exp(self.value[r * k + j]) * total;
        }
      }
    }
  });
}

template <typename T>
Var<T> pick(const Var<T>& a, std::span<const int> indices) {
  require(a.value().rank() == 2 && indices.size() == a.dim(0), "pick: expects N x K and N indices");
  const std::size_t n = a.dim(0), k = a.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  BasicTensor<T> out({n});
  for (std::size_t r = 0; r < n; ++r) {
    require(idx[r] >= 0 && static_cast<std::size_t>(idx[r]) < k, "pick: index out of range");
    out[r] = a.value()[r * k + idx[r]];
  }
  return make_result<T>(std::move(out), {a}, [idx, k](Node<T>& self) {
    if (auto* in = input_needing_grad(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) g[r * k + idx[r]] += self.grad[r];
    }
  });
}

#define GOALNAV_INSTANTIATE_OPS(T)                                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                  \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> scale(const Var<T>&, T);                                            \
  template Var<T> add_scalar(const Var<T>&, T);                                       \
  template Var<T> relu(const Var<T>&);                                                \
  template Var<T> sigmoid(const Var<T>&);                                             \
  template Var<T> tanh(const Var<T>&);                                                \
  template Var<T> exp(const Var<T>&);                                                 \
  template Var<T> square(const Var<T>&);                                              \
  template Var<T> clamp(const Var<T>&, T, T);                                         \
  template Var<T> minimum(const Var<T>&, const Var<T>&);                              \
  template Var<T> reshape(const Var<T>&, Shape);                                      \
  template Var<T> sum(const Var<T>&);                                                 \
  template Var<T> mean(const Var<T>&);                                                \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);      \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int); \
  template Var<T> group_norm(const Var<T>&, const Var<T>&, const Var<T>&, int, T);    \
  template Var<T> film_affine(const Var<T>&, const Var<T>&, const Var<T>&);           \
  template Var<T> global_avg_pool(const Var<T>&);                                     \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                            \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                            \
  template Var<T> slice_rows(const Var<T>&, std::size_t, std::size_t);                \
  template Var<T> sum_axis1(const Var<T>&);                                           \
  template Var<T> embedding(const Var<T>&, std::span<const int>);                     \
  template Var<T> log_softmax(const Var<T>&);                                         \
  template Var<T> pick(const Var<T>&, std::span<const int>);

GOALNAV_INSTANTIATE_OPS(float)
GOALNAV_INSTANTIATE_OPS(double)

}  // namespace goalnav::nn
