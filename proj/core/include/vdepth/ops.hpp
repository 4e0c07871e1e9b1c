#pragma once

#include <array>
#include <span>

#include "vdepth/autograd.hpp"

namespace vdepth::ops {

// Elementwise ops require equal shapes; there is no implicit broadcasting.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
/// log(1 + e^x), evaluated without overflow.
template <typename T> Var<T> softplus(const Var<T>& x);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

/// Concatenation / slicing along axis 0 or 1 of tensors of any rank.
template <typename T> Var<T> concat(std::span<const Var<T>> xs, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

/// x [N,C,H,W], w [O,C,k,k], bias [O] (may be undefined).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride, std::size_t pad);

/// x [N,C,T,H,W], w [O,C,kt,kh,kw]; stride and pad per (t, h, w).
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::array<std::size_t, 3> stride,
              std::array<std::size_t, 3> pad);

/// Per-channel normalization over every axis except 1. In training mode the
/// batch statistics are used and the running estimates updated in place.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

/// [N,C,H,W] -> [N,C,H*f,W*f] by pixel replication.
template <typename T> Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

/// [N,C,H,W] -> [N,C,out_h,out_w], half-pixel centers, edge clamped. Also
/// used for downsampling by integer factors, where it reduces to box averaging
/// for factor 2.
template <typename T> Var<T> resize_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// 2x2x2 max pooling with stride 2 on [N,C,T,H,W]; partial windows at the end
/// of odd axes are kept, so an axis of length 1 stays length 1.
template <typename T> Var<T> max_pool3d(const Var<T>& x);

/// [N,C,...] -> [N,C], mean over every trailing axis.
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

/// x [N,F], w [O,F], bias [O].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

/// Time-major frames [T*B,C,H,W] (frame t of sequence b at row t*B+b) to
/// clips [B,C,T,H,W].
template <typename T> Var<T> frames_to_clips(const Var<T>& frames, std::size_t time_steps);

}  // namespace vdepth::ops
