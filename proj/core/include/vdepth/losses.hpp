#pragma once

#include <cmath>

#include "vdepth/autograd.hpp"

namespace vdepth {

struct SpatialLossConfig {
  double lambda = 1.0;  ///< gradient term weight
  double mu = 1.0;  ///< surface-normal term weight
  double alpha = 0.1;  ///< temporal (adversarial) term weight
  double eps_normal = 1e-8;  ///< floor on the product of the two normal lengths

  void validate() const;
};

/// ln(|x - y| + 1).
inline double log_l1(double x, double y) { return std::log1p(std::abs(x - y)); }

// The map functions below take depth maps of shape [..., H, W]; leading axes
// index independent maps and every mean is pooled over all of them. Masks
// have the same shape, nonzero = valid. Means run over valid pixels only and
// throw DegenerateInputError when there are none. For the gradient and normal
// terms a pixel counts only if it and its right and lower neighbors (clamped
// at the border) are valid.

template <typename T> Tensor<T> log_l1(const Tensor<T>& x, const Tensor<T>& y);

template <typename T> double depth_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask);
template <typename T> double grad_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask);
template <typename T>
double normal_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, double eps = 1e-8);
template <typename T>
double spatial_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, const SpatialLossConfig& config = {});

/// Differentiable versions, gradient flowing into d only.
template <typename T> Var<T> depth_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask);
template <typename T> Var<T> grad_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask);
template <typename T> Var<T> normal_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask, double eps = 1e-8);

template <typename T>
struct SpatialLossTerms {
  Var<T> depth, grad, normal;
  Var<T> spatial;  ///< depth + lambda * grad + mu * normal
};

template <typename T>
SpatialLossTerms<T> spatial_loss_terms(const Var<T>& d, const Tensor<T>& g, const Mask& mask,
                                       const SpatialLossConfig& config = {});

inline double total_loss(double spatial, double temporal, const SpatialLossConfig& config = {}) {
  return spatial + config.alpha * temporal;
}

template <typename T>
Var<T> total_loss(const Var<T>& spatial, const Var<T>& temporal, const SpatialLossConfig& config = {});

}  // namespace vdepth
