#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vdepth/ops.hpp"

namespace vdepth::nn {

/// Named views of a model's trainable parameters and persistent buffers.
template <typename T>
struct ParameterRefs {
  std::vector<std::pair<std::string, Var<T>*>> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params) n += v->value().size();
    return n;
  }
  std::vector<Var<T>*> vars() const {
    std::vector<Var<T>*> out;
    for (const auto& [name, v] : params) out.push_back(v);
    return out;
  }
  void zero_grad() const {
    for (const auto& [name, v] : params) v->zero_grad();
  }
};

/// Zero-mean normal draws with variance 2 / fan_in.
template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t pad_,
         std::mt19937_64& rng)
      : weight(he_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, rng), true),
        bias(Tensor<T>({out}), true),
        stride(stride_),
        pad(pad_) {}

  /// Same-size output for odd kernels.
  static Conv2d same(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng) {
    return Conv2d(in, out, kernel, 1, kernel / 2, rng);
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

  void collect(ParameterRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + ".weight", &weight);
    refs.params.emplace_back(prefix + ".bias", &bias);
  }
};

template <typename T>
struct Conv3d {
  Var<T> weight;
  Var<T> bias;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};

  Conv3d() = default;
  Conv3d(std::size_t in, std::size_t out, std::size_t kt, std::size_t k, std::array<std::size_t, 3> stride_,
         std::mt19937_64& rng)
      : weight(he_normal<T>({out, in, kt, k, k}, in * kt * k * k, rng), true),
        bias(Tensor<T>({out}), true),
        stride(stride_),
        pad{kt / 2, k / 2, k / 2} {}

  Var<T> operator()(const Var<T>& x) const { return ops::conv3d(x, weight, bias, stride, pad); }

  void collect(ParameterRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + ".weight", &weight);
    refs.params.emplace_back(prefix + ".bias", &bias);
  }
};

template <typename T>
struct BatchNorm {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma(Tensor<T>({channels}, T{1}), true),
        beta(Tensor<T>({channels}), true),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}) {}

  Var<T> operator()(const Var<T>& x, bool training) {
    return ops::batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }

  void collect(ParameterRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + ".gamma", &gamma);
    refs.params.emplace_back(prefix + ".beta", &beta);
    refs.buffers.emplace_back(prefix + ".running_mean", &running_mean);
    refs.buffers.emplace_back(prefix + ".running_var", &running_var);
  }
};

template <typename T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(he_normal<T>({out, in}, in, rng), true), bias(Tensor<T>({out}), true) {}

  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, weight, bias); }

  void collect(ParameterRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + ".weight", &weight);
    refs.params.emplace_back(prefix + ".bias", &bias);
  }
};

/// Copies values between two models of the same architecture, possibly of
/// different scalar types (used to run gradient checks in double).
template <typename To, typename From>
void copy_state(const ParameterRefs<From>& from, ParameterRefs<To>& to) {
  VDEPTH_REQUIRE(from.params.size() == to.params.size() && from.buffers.size() == to.buffers.size(),
                 "copy_state: architecture mismatch");
  for (std::size_t i = 0; i < from.params.size(); ++i)
    to.params[i].second->mutable_value() = from.params[i].second->value().template cast<To>();
  for (std::size_t i = 0; i < from.buffers.size(); ++i)
    *to.buffers[i].second = from.buffers[i].second->template cast<To>();
}

}  // namespace vdepth::nn
