#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vdepth/nn.hpp"

namespace vdepth {

struct ClstmConfig {
  std::size_t feature_channels = 64;  ///< c; the cell has as many channels
  std::size_t compressed_channels = 8;
  std::size_t refine_channels = 128;
  double d_min = 0.01;  ///< meters, added after softplus
  double init_depth = 3.0;  ///< meters, initial output level of the final bias

  void validate() const;
};

/// Recurrent memory plus the compressed features of the previous frame.
template <typename T>
struct ClstmState {
  Var<T> cell;  ///< [B, c, h, w]
  Var<T> prev_compressed;  ///< [B, 8, h, w]
};

/// softplus(logits) + d_min, bilinearly resized to (out_h, out_w).
template <typename T>
Var<T> depth_from_logits(const Var<T>& logits, std::size_t out_h, std::size_t out_w, double d_min);

/// Inverse of softplus, used to start heads at a chosen depth.
double softplus_inverse(double y);

template <typename T>
class ConvLstm {
 public:
  ConvLstm() = default;
  ConvLstm(const ClstmConfig& config, std::uint64_t seed);

  /// D_prev: 1x1 convolution c -> 8.
  Var<T> compress(const Var<T>& features) const;

  /// State before the first frame: zero cell, D_prev of that same frame.
  ClstmState<T> initial_state(const Var<T>& first_features) const;

  /// Stacked pre-activations [B, 4c, h, w] of the forget, input, candidate
  /// and output gates for input concat(features, prev_compressed).
  Var<T> gate_preactivations(const Var<T>& features, const Var<T>& prev_compressed) const;

  struct CellOutput {
    Var<T> refine_input;  ///< concat(o_t, tanh(C_t))
    Var<T> cell;  ///< C_t
  };
  /// The elementwise part of the cell: C_t = f * C_{t-1} + i * C~.
  CellOutput update(const Var<T>& preactivations, const Var<T>& prev_cell) const;

  /// Two convolutions to a one-channel logit map.
  Var<T> refine(const Var<T>& refine_input) const;

  struct StepResult {
    Var<T> logits;  ///< [B, 1, h, w]
    ClstmState<T> state;
  };
  StepResult step(const Var<T>& features, const ClstmState<T>& state) const;

  /// Left-to-right over features[t] = [B, c, h, w]; returns depth maps
  /// [B, 1, out_h, out_w] per frame.
  std::vector<Var<T>> run_sequence(const std::vector<Var<T>>& features, std::size_t out_h, std::size_t out_w) const;

  const ClstmConfig& config() const { return config_; }
  void collect(nn::ParameterRefs<T>& refs, const std::string& prefix);

  // Gate kernels over c + 8 input channels and the layers around them.
  Var<T> w_f, w_i, w_c, w_o;
  Var<T> b_f, b_i, b_c, b_o;
  nn::Conv2d<T> d_prev;
  nn::Conv2d<T> refine1, refine2;

 private:
  void check_features(const Var<T>& features) const;

  ClstmConfig config_;
};

/// Online inference: frames are pushed one at a time and state persists
/// between calls. Records no graph. Single owner.
template <typename T>
class ClstmStepper {
 public:
  explicit ClstmStepper(const ConvLstm<T>& model) : model_(&model) {}

  /// features [B, c, h, w] -> logits [B, 1, h, w].
  Tensor<T> push(const Tensor<T>& features);
  void reset() { state_.reset(); }
  bool started() const { return state_.has_value(); }

 private:
  const ConvLstm<T>* model_;
  std::optional<ClstmState<T>> state_;
};

/// Temporally blind head: three 3x3 convolutions with 128, 128 and 1 channels.
template <typename T>
class BaselineHead {
 public:
  BaselineHead() = default;
  BaselineHead(const ClstmConfig& config, std::uint64_t seed);

  /// features [N, c, h, w] -> logits [N, 1, h, w]; frames are independent.
  Var<T> logits(const Var<T>& features) const;
  std::vector<Var<T>> run_sequence(const std::vector<Var<T>>& features, std::size_t out_h, std::size_t out_w) const;

  const ClstmConfig& config() const { return config_; }
  void collect(nn::ParameterRefs<T>& refs, const std::string& prefix);

  nn::Conv2d<T> conv1, conv2, conv3;

 private:
  ClstmConfig config_;
};

}  // namespace vdepth
