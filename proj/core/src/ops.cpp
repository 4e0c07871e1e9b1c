#include "vdepth/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "vdepth/gemm.hpp"

namespace vdepth::ops {
namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  VDEPTH_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                             shape_to_string(b.shape()));
}

template <typename T, typename F, typename G>
Var<T> unary(const Var<T>& x, F f, G dfdx_from_xy) {
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  T* yv = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) yv[i] = f(xv[i]);
  return make_result<T>(std::move(y), {x}, [dfdx_from_xy](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* gx = in.grad_buffer().data();
    const T* gy = out.grad.data();
    const T* xv = in.value.data();
    const T* yv = out.value.data();
    for (std::size_t i = 0; i < out.value.size(); ++i) gx[i] += gy[i] * dfdx_from_xy(xv[i], yv[i]);
  });
}

// Split a shape into [outer, axis, inner] around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

struct VolumeGeom {
  std::size_t c, t, h, w;
  std::size_t kt, kh, kw;
  std::size_t st, sh, sw;
  std::size_t pt, ph, pw;
  std::size_t ot, oh, ow;

  std::size_t patch() const { return c * kt * kh * kw; }
  std::size_t in_size() const { return c * t * h * w; }
  std::size_t out_spatial() const { return ot * oh * ow; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && st == 1 && sh == 1 && sw == 1 && pt == 0 && ph == 0 && pw == 0;
  }
};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  VDEPTH_REQUIRE(in + 2 * p >= k, "convolution kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

// Rows of `col` enumerate (c, a, b, d) kernel taps; columns output positions.
template <typename T, bool Accumulate>
void volume_transfer(const VolumeGeom& g, const T* src_or_null, T* x, T* col) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t cols = g.out_spatial();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t d = 0; d < g.kw; ++d, ++row) {
          T* crow = col + row * cols;
          for (std::size_t ot = 0; ot < g.ot; ++ot) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * g.st + a) - static_cast<std::ptrdiff_t>(g.pt);
            T* cplane = crow + ot * plane;
            if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.t)) {
              if constexpr (!Accumulate) std::fill(cplane, cplane + plane, T{0});
              continue;
            }
            for (std::size_t oh = 0; oh < g.oh; ++oh) {
              const std::ptrdiff_t ih =
                  static_cast<std::ptrdiff_t>(oh * g.sh + b) - static_cast<std::ptrdiff_t>(g.ph);
              T* cline = cplane + oh * g.ow;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
                if constexpr (!Accumulate) std::fill(cline, cline + g.ow, T{0});
                continue;
              }
              const std::size_t base = ((c * g.t + static_cast<std::size_t>(it)) * g.h + static_cast<std::size_t>(ih)) * g.w;
              for (std::size_t ow = 0; ow < g.ow; ++ow) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * g.sw + d) - static_cast<std::ptrdiff_t>(g.pw);
                const bool inside = iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w);
                if constexpr (Accumulate) {
                  if (inside) x[base + static_cast<std::size_t>(iw)] += cline[ow];
                } else {
                  cline[ow] = inside ? src_or_null[base + static_cast<std::size_t>(iw)] : T{0};
                }
              }
            }
          }
        }
}

template <typename T>
void im2col(const VolumeGeom& g, const T* x, T* col) {
  volume_transfer<T, false>(g, x, nullptr, col);
}

template <typename T>
void col2im_add(const VolumeGeom& g, const T* col, T* x) {
  volume_transfer<T, true>(g, nullptr, x, const_cast<T*>(col));
}

template <typename T>
Var<T> conv_volume(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const VolumeGeom& g, std::size_t n,
                   Shape out_shape) {
  const std::size_t o = w.dim(0);
  const std::size_t k = g.patch();
  const std::size_t p = g.out_spatial();
  VDEPTH_REQUIRE(w.value().size() == o * k, "convolution weight shape does not match input channels");
  if (bias.defined()) VDEPTH_REQUIRE(bias.value().size() == o, "convolution bias size mismatch");

  Tensor<T> y(std::move(out_shape));
  const PackedLhs<T> packed(false, o, k, w.value().data(), k);
  std::vector<T> col(g.pointwise() ? 0 : k * p);
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = xv + i * g.in_size();
    const T* cp = xi;
    if (!g.pointwise()) {
      im2col(g, xi, col.data());
      cp = col.data();
    }
    T* yi = y.data() + i * o * p;
    gemm_packed(packed, false, p, T{1}, cp, p, T{0}, yi, p);
    if (bias.defined()) {
      const T* bv = bias.value().data();
      for (std::size_t r = 0; r < o; ++r)
        for (std::size_t q = 0; q < p; ++q) yi[r * p + q] += bv[r];
    }
  }

  return make_result<T>(std::move(y), {x, w, bias}, [g, n, o, k, p](Node<T>& out) {
    auto& xn = *out.inputs[0];
    auto& wn = *out.inputs[1];
    Node<T>* bn = out.inputs[2] ? out.inputs[2].get() : nullptr;
    const T* gy = out.grad.data();
    std::vector<T> col(g.pointwise() ? 0 : k * p);
    if (xn.requires_grad) {
      const PackedLhs<T> packed_t(true, k, o, wn.value.data(), k);
      T* gx = xn.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        const T* gyi = gy + i * o * p;
        T* gxi = gx + i * g.in_size();
        if (g.pointwise()) {
          gemm_packed(packed_t, false, p, T{1}, gyi, p, T{1}, gxi, p);
        } else {
          gemm_packed(packed_t, false, p, T{1}, gyi, p, T{0}, col.data(), p);
          col2im_add(g, col.data(), gxi);
        }
      }
    }
    if (wn.requires_grad) {
      T* gw = wn.grad_buffer().data();
      const T* xv = xn.value.data();
      for (std::size_t i = 0; i < n; ++i) {
        const T* xi = xv + i * g.in_size();
        const T* cp = xi;
        if (!g.pointwise()) {
          im2col(g, xi, col.data());
          cp = col.data();
        }
        gemm(false, true, o, k, p, T{1}, gy + i * o * p, p, cp, p, T{1}, gw, k);
      }
    }
    if (bn && bn->requires_grad) {
      T* gb = bn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < o; ++r) {
          const T* row = gy + (i * o + r) * p;
          T acc{0};
          for (std::size_t q = 0; q < p; ++q) acc += row[q];
          gb[r] += acc;
        }
    }
  });
}

struct LinearInterp {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

LinearInterp interp_axis(std::size_t in, std::size_t out) {
  LinearInterp li;
  li.lo.resize(out);
  li.hi.resize(out);
  li.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto l = static_cast<std::size_t>(std::floor(src));
    li.lo[i] = l;
    li.hi[i] = std::min(l + 1, in - 1);
    li.frac[i] = src - static_cast<double>(l);
  }
  return li;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& out) {
    for (int s = 0; s < 2; ++s) {
      auto& in = *out.inputs[s];
      if (!in.requires_grad) continue;
      T* g = in.grad_buffer().data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& out) {
    if (out.inputs[0]->requires_grad) {
      T* g = out.inputs[0]->grad_buffer().data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
    if (out.inputs[1]->requires_grad) {
      T* g = out.inputs[1]->grad_buffer().data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] -= out.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& out) {
    auto& an = *out.inputs[0];
    auto& bn = *out.inputs[1];
    if (an.requires_grad) {
      T* g = an.grad_buffer().data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      T* g = bn.grad_buffer().data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary<T>(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary<T>(a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return unary<T>(
      x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().values()) acc += v;
  Tensor<T> y(Shape{1}, static_cast<T>(acc));
  return make_result<T>(std::move(y), {x}, [](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t i = 0; i < in.value.size(); ++i) g[i] += out.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  VDEPTH_REQUIRE(x.value().size() > 0, "mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> concat(std::span<const Var<T>> xs, std::size_t axis) {
  VDEPTH_REQUIRE(!xs.empty(), "concat of zero tensors");
  VDEPTH_REQUIRE(axis < xs[0].shape().size(), "concat axis out of range");
  Shape shape = xs[0].shape();
  std::size_t total = 0;
  for (const auto& x : xs) {
    VDEPTH_REQUIRE(x.shape().size() == shape.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (d != axis) VDEPTH_REQUIRE(x.shape()[d] == shape[d], "concat shape mismatch " + shape_to_string(x.shape()));
    total += x.shape()[axis];
  }
  shape[axis] = total;
  Tensor<T> y(shape);
  const AxisSplit out_split = split_at(shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const AxisSplit s = split_at(x.shape(), axis);
    const std::size_t chunk = s.extent * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
      std::memcpy(y.data() + o * out_split.extent * out_split.inner + off * s.inner, x.value().data() + o * chunk,
                  chunk * sizeof(T));
    off += s.extent;
  }
  std::vector<Var<T>> inputs(xs.begin(), xs.end());
  return make_result<T>(std::move(y), std::move(inputs), [axis, offsets, out_split](Node<T>& out) {
    for (std::size_t k = 0; k < out.inputs.size(); ++k) {
      auto& in = *out.inputs[k];
      if (!in.requires_grad) continue;
      const AxisSplit s = split_at(in.value.shape(), axis);
      const std::size_t chunk = s.extent * s.inner;
      T* g = in.grad_buffer().data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* src = out.grad.data() + o * out_split.extent * out_split.inner + offsets[k] * s.inner;
        T* dst = g + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  VDEPTH_REQUIRE(axis < x.shape().size(), "slice axis out of range");
  VDEPTH_REQUIRE(start + length <= x.shape()[axis], "slice out of range");
  Shape shape = x.shape();
  shape[axis] = length;
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor<T> y(shape);
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o)
    std::memcpy(y.data() + o * chunk, x.value().data() + o * s.extent * s.inner + start * s.inner,
                chunk * sizeof(T));
  return make_result<T>(std::move(y), {x}, [s, start, chunk](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      T* dst = g + o * s.extent * s.inner + start * s.inner;
      const T* src = out.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(y), {x}, [](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride, std::size_t pad) {
  VDEPTH_REQUIRE(x.shape().size() == 4 && w.shape().size() == 4, "conv2d expects NCHW input and OCKK weights");
  VDEPTH_REQUIRE(x.dim(1) == w.dim(1), "conv2d channel mismatch: input " + std::to_string(x.dim(1)) +
                                            ", weight " + std::to_string(w.dim(1)));
  VolumeGeom g{};
  g.c = x.dim(1);
  g.t = 1;
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.kt = 1;
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.st = 1;
  g.sh = g.sw = stride;
  g.pt = 0;
  g.ph = g.pw = pad;
  g.ot = 1;
  g.oh = conv_out(g.h, g.kh, stride, pad);
  g.ow = conv_out(g.w, g.kw, stride, pad);
  return conv_volume(x, w, bias, g, x.dim(0), Shape{x.dim(0), w.dim(0), g.oh, g.ow});
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::array<std::size_t, 3> stride,
              std::array<std::size_t, 3> pad) {
  VDEPTH_REQUIRE(x.shape().size() == 5 && w.shape().size() == 5, "conv3d expects NCTHW input and OCKKK weights");
  VDEPTH_REQUIRE(x.dim(1) == w.dim(1), "conv3d channel mismatch");
  VolumeGeom g{};
  g.c = x.dim(1);
  g.t = x.dim(2);
  g.h = x.dim(3);
  g.w = x.dim(4);
  g.kt = w.dim(2);
  g.kh = w.dim(3);
  g.kw = w.dim(4);
  g.st = stride[0];
  g.sh = stride[1];
  g.sw = stride[2];
  g.pt = pad[0];
  g.ph = pad[1];
  g.pw = pad[2];
  g.ot = conv_out(g.t, g.kt, g.st, g.pt);
  g.oh = conv_out(g.h, g.kh, g.sh, g.ph);
  g.ow = conv_out(g.w, g.kw, g.sw, g.pw);
  return conv_volume(x, w, bias, g, x.dim(0), Shape{x.dim(0), w.dim(0), g.ot, g.oh, g.ow});
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
  VDEPTH_REQUIRE(x.shape().size() >= 2, "batch_norm expects [N,C,...]");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t r = x.value().size() / (n * c);
  VDEPTH_REQUIRE(gamma.value().size() == c && beta.value().size() == c, "batch_norm parameter size mismatch");
  const std::size_t count = n * r;

  std::vector<T> mu(c), inv_std(c);
  if (training) {
    VDEPTH_REQUIRE(count > 1, "batch_norm in training mode needs more than one value per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.value().data() + (i * c + ch) * r;
        for (std::size_t q = 0; q < r; ++q) s += p[q];
      }
      const double m = s / static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.value().data() + (i * c + ch) * r;
        for (std::size_t q = 0; q < r; ++q) s2 += (p[q] - m) * (p[q] - m);
      }
      const double var = s2 / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = s2 / static_cast<double>(count - 1);
      running_mean[ch] = (T{1} - momentum) * running_mean[ch] + momentum * static_cast<T>(m);
      running_var[ch] = (T{1} - momentum) * running_var[ch] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv_std[ch] = T{1} / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> xhat(training ? x.shape() : Shape{});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * r;
      const T* p = x.value().data() + base;
      T* yp = y.data() + base;
      const T sc = gamma.value()[ch] * inv_std[ch];
      const T sh = beta.value()[ch] - mu[ch] * sc;
      for (std::size_t q = 0; q < r; ++q) yp[q] = p[q] * sc + sh;
      if (training)
        for (std::size_t q = 0; q < r; ++q) xhat[base + q] = (p[q] - mu[ch]) * inv_std[ch];
    }

  return make_result<T>(
      std::move(y), {x, gamma, beta},
      [n, c, r, count, training, inv_std, xhat = std::move(xhat), mu](Node<T>& out) {
        auto& xn = *out.inputs[0];
        auto& gn = *out.inputs[1];
        auto& bn = *out.inputs[2];
        const T* gy = out.grad.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * r;
            for (std::size_t q = 0; q < r; ++q) {
              const T xh = training ? xhat[base + q] : (xn.value[base + q] - mu[ch]) * inv_std[ch];
              sum_gy += gy[base + q];
              sum_gy_xhat += gy[base + q] * xh;
            }
          }
          if (gn.requires_grad) gn.grad_buffer()[ch] += static_cast<T>(sum_gy_xhat);
          if (bn.requires_grad) bn.grad_buffer()[ch] += static_cast<T>(sum_gy);
          if (!xn.requires_grad) continue;
          T* gx = xn.grad_buffer().data();
          const T g = gn.value[ch];
          if (training) {
            const T mean_gy = static_cast<T>(sum_gy / static_cast<double>(count));
            const T mean_gy_xhat = static_cast<T>(sum_gy_xhat / static_cast<double>(count));
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t base = (i * c + ch) * r;
              for (std::size_t q = 0; q < r; ++q)
                gx[base + q] += g * inv_std[ch] * (gy[base + q] - mean_gy - xhat[base + q] * mean_gy_xhat);
            }
          } else {
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t base = (i * c + ch) * r;
              for (std::size_t q = 0; q < r; ++q) gx[base + q] += g * inv_std[ch] * gy[base + q];
            }
          }
        }
      });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  VDEPTH_REQUIRE(x.shape().size() == 4 && factor >= 1, "upsample_nearest expects NCHW and factor >= 1");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor<T> y(Shape{x.dim(0), x.dim(1), oh, ow});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = x.value().data() + p * h * w;
    T* dst = y.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] = src[(i / factor) * w + j / factor];
  }
  return make_result<T>(std::move(y), {x}, [nc, h, w, oh, ow, factor](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t p = 0; p < nc; ++p) {
      const T* src = out.grad.data() + p * oh * ow;
      T* dst = g + p * h * w;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) dst[(i / factor) * w + j / factor] += src[i * ow + j];
    }
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  VDEPTH_REQUIRE(x.shape().size() == 4 && out_h > 0 && out_w > 0, "resize_bilinear expects NCHW");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) return reshape(x, x.shape());
  const LinearInterp ry = interp_axis(h, out_h);
  const LinearInterp rx = interp_axis(w, out_w);
  Tensor<T> y(Shape{x.dim(0), x.dim(1), out_h, out_w});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = x.value().data() + p * h * w;
    T* dst = y.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ry.frac[i]);
      const T* r0 = src + ry.lo[i] * w;
      const T* r1 = src + ry.hi[i] * w;
      for (std::size_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(rx.frac[j]);
        const T top = r0[rx.lo[j]] * (T{1} - fx) + r0[rx.hi[j]] * fx;
        const T bot = r1[rx.lo[j]] * (T{1} - fx) + r1[rx.hi[j]] * fx;
        dst[i * out_w + j] = top * (T{1} - fy) + bot * fy;
      }
    }
  }
  return make_result<T>(std::move(y), {x}, [nc, h, w, out_h, out_w, ry, rx](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t p = 0; p < nc; ++p) {
      const T* src = out.grad.data() + p * out_h * out_w;
      T* dst = g + p * h * w;
      for (std::size_t i = 0; i < out_h; ++i) {
        const T fy = static_cast<T>(ry.frac[i]);
        for (std::size_t j = 0; j < out_w; ++j) {
          const T fx = static_cast<T>(rx.frac[j]);
          const T v = src[i * out_w + j];
          dst[ry.lo[i] * w + rx.lo[j]] += v * (T{1} - fy) * (T{1} - fx);
          dst[ry.lo[i] * w + rx.hi[j]] += v * (T{1} - fy) * fx;
          dst[ry.hi[i] * w + rx.lo[j]] += v * fy * (T{1} - fx);
          dst[ry.hi[i] * w + rx.hi[j]] += v * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool3d(const Var<T>& x) {
  VDEPTH_REQUIRE(x.shape().size() == 5, "max_pool3d expects NCTHW");
  const std::size_t nc = x.dim(0) * x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const std::size_t ot = (t + 1) / 2, oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> y(Shape{x.dim(0), x.dim(1), ot, oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = x.value().data() + p * t * h * w;
    for (std::size_t a = 0; a < ot; ++a)
      for (std::size_t b = 0; b < oh; ++b)
        for (std::size_t d = 0; d < ow; ++d) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = 0;
          for (std::size_t i = 2 * a; i < std::min(2 * a + 2, t); ++i)
            for (std::size_t j = 2 * b; j < std::min(2 * b + 2, h); ++j)
              for (std::size_t k = 2 * d; k < std::min(2 * d + 2, w); ++k) {
                const std::size_t idx = (i * h + j) * w + k;
                if (src[idx] > best) {
                  best = src[idx];
                  best_i = idx;
                }
              }
          const std::size_t o = p * ot * oh * ow + (a * oh + b) * ow + d;
          y[o] = best;
          argmax[o] = p * t * h * w + best_i;
        }
  }
  return make_result<T>(std::move(y), {x}, [argmax = std::move(argmax)](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += out.grad[o];
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  VDEPTH_REQUIRE(x.shape().size() >= 3, "global_avg_pool expects [N,C,...]");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t r = x.value().size() / (n * c);
  Tensor<T> y(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t q = 0; q < r; ++q) acc += x.value()[p * r + q];
    y[p] = static_cast<T>(acc / static_cast<double>(r));
  }
  return make_result<T>(std::move(y), {x}, [n, c, r](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    const T inv = T{1} / static_cast<T>(r);
    for (std::size_t p = 0; p < n * c; ++p)
      for (std::size_t q = 0; q < r; ++q) g[p * r + q] += out.grad[p] * inv;
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  VDEPTH_REQUIRE(x.shape().size() == 2 && w.shape().size() == 2 && x.dim(1) == w.dim(1), "linear shape mismatch");
  const std::size_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
  Tensor<T> y(Shape{n, o});
  gemm(false, true, n, o, f, T{1}, x.value().data(), f, w.value().data(), f, T{0}, y.data(), o);
  if (bias.defined())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < o; ++j) y[i * o + j] += bias.value()[j];
  return make_result<T>(std::move(y), {x, w, bias}, [n, f, o](Node<T>& out) {
    auto& xn = *out.inputs[0];
    auto& wn = *out.inputs[1];
    Node<T>* bn = out.inputs[2] ? out.inputs[2].get() : nullptr;
    if (xn.requires_grad)
      gemm(false, false, n, f, o, T{1}, out.grad.data(), o, wn.value.data(), f, T{1}, xn.grad_buffer().data(), f);
    if (wn.requires_grad)
      gemm(true, false, o, f, n, T{1}, out.grad.data(), o, xn.value.data(), f, T{1}, wn.grad_buffer().data(), f);
    if (bn && bn->requires_grad) {
      T* gb = bn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < o; ++j) gb[j] += out.grad[i * o + j];
    }
  });
}

template <typename T>
Var<T> frames_to_clips(const Var<T>& frames, std::size_t time_steps) {
  VDEPTH_REQUIRE(frames.shape().size() == 4, "frames_to_clips expects [T*B,C,H,W]");
  VDEPTH_REQUIRE(time_steps > 0 && frames.dim(0) % time_steps == 0, "frame count not divisible by time steps");
  const std::size_t b = frames.dim(0) / time_steps, c = frames.dim(1), hw = frames.dim(2) * frames.dim(3);
  Tensor<T> y(Shape{b, c, time_steps, frames.dim(2), frames.dim(3)});
  auto src_index = [=](std::size_t bi, std::size_t ci, std::size_t ti) { return ((ti * b + bi) * c + ci) * hw; };
  auto dst_index = [=](std::size_t bi, std::size_t ci, std::size_t ti) { return ((bi * c + ci) * time_steps + ti) * hw; };
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < time_steps; ++ti)
        std::memcpy(y.data() + dst_index(bi, ci, ti), frames.value().data() + src_index(bi, ci, ti), hw * sizeof(T));
  return make_result<T>(std::move(y), {frames}, [=](Node<T>& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    T* g = in.grad_buffer().data();
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ti = 0; ti < time_steps; ++ti) {
          const T* src = out.grad.data() + dst_index(bi, ci, ti);
          T* dst = g + src_index(bi, ci, ti);
          for (std::size_t q = 0; q < hw; ++q) dst[q] += src[q];
        }
  });
}

#define VDEPTH_INSTANTIATE_OPS(T)                                                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> scale(const Var<T>&, T);                                                                        \
  template Var<T> add_scalar(const Var<T>&, T);                                                                   \
  template Var<T> relu(const Var<T>&);                                                                            \
  template Var<T> sigmoid(const Var<T>&);                                                                         \
  template Var<T> tanh(const Var<T>&);                                                                            \
  template Var<T> softplus(const Var<T>&);                                                                        \
  template Var<T> sum(const Var<T>&);                                                                             \
  template Var<T> mean(const Var<T>&);                                                                            \
  template Var<T> concat(std::span<const Var<T>>, std::size_t);                                                   \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                                    \
  template Var<T> reshape(const Var<T>&, Shape);                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);                  \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, std::array<std::size_t, 3>,                 \
                         std::array<std::size_t, 3>);                                                             \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, T);    \
  template Var<T> upsample_nearest(const Var<T>&, std::size_t);                                                   \
  template Var<T> resize_bilinear(const Var<T>&, std::size_t, std::size_t);                                       \
  template Var<T> max_pool3d(const Var<T>&);                                                                      \
  template Var<T> global_avg_pool(const Var<T>&);                                                                 \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                            \
  template Var<T> frames_to_clips(const Var<T>&, std::size_t);

VDEPTH_INSTANTIATE_OPS(float)
VDEPTH_INSTANTIATE_OPS(double)

}  // namespace vdepth::ops
