#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vdepth/nn.hpp"

namespace vdepth {

enum class BackbonePreset { Tiny, Small };

struct BackboneConfig {
  BackbonePreset preset = BackbonePreset::Tiny;
  std::array<std::size_t, 4> encoder_channels{16, 32, 64, 128};
  std::size_t feature_channels = 64;  ///< c
  std::size_t output_stride = 4;
  std::size_t mff_channels = 16;  ///< per-scale projection width in the fusion module

  static BackboneConfig tiny();
  static BackboneConfig small();
  static BackboneConfig from_preset(const std::string& name);

  /// Widths of the four up-projection modules.
  std::array<std::size_t, 4> decoder_channels() const;
  void validate() const;
};

std::string preset_name(BackbonePreset preset);

/// Encoder of four stride-2 stages, decoder of four up-projection modules
/// (the first log2(16 / output_stride) of them upsample 2x) and multi-scale
/// fusion of all encoder stages into c feature channels.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, std::uint64_t seed);

  /// frames [N,3,H,W] with H and W divisible by 16 -> [N,c,H/s,W/s].
  Var<T> forward(const Var<T>& frames, bool training);

  const BackboneConfig& config() const { return config_; }
  void collect(nn::ParameterRefs<T>& refs, const std::string& prefix);

 private:
  struct ConvBn {
    nn::Conv2d<T> conv;
    nn::BatchNorm<T> bn;
    Var<T> operator()(const Var<T>& x, bool training) { return ops::relu(bn(conv(x), training)); }
  };

  BackboneConfig config_;
  std::array<ConvBn, 4> down_, refine_;  // encoder stages
  std::array<ConvBn, 4> up_;  // decoder
  std::array<ConvBn, 4> project_;  // fusion: per-stage 1x1 projections
  ConvBn fuse_;
};

template <typename T>
Backbone<T> init_backbone(const BackboneConfig& config, std::uint64_t seed) {
  return Backbone<T>(config, seed);
}

/// Convenience wrapper around Backbone::forward in inference mode.
template <typename T>
Tensor<T> extract_features(Backbone<T>& backbone, const Tensor<T>& frames);

}  // namespace vdepth
