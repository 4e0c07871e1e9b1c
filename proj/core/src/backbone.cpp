#include "vdepth/backbone.hpp"

#include <bit>

#include "vdepth/error.hpp"

namespace vdepth {

BackboneConfig BackboneConfig::tiny() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::small() {
  BackboneConfig c;
  c.preset = BackbonePreset::Small;
  c.encoder_channels = {32, 64, 128, 256};
  c.feature_channels = 128;
  return c;
}

BackboneConfig BackboneConfig::from_preset(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "small") return small();
  throw PreconditionError("unknown backbone preset '" + name + "' (expected tiny or small)");
}

std::string preset_name(BackbonePreset preset) { return preset == BackbonePreset::Small ? "small" : "tiny"; }

std::array<std::size_t, 4> BackboneConfig::decoder_channels() const {
  const std::size_t top = encoder_channels[3];
  return {top / 2, top / 4, top / 8, top / 8};
}

void BackboneConfig::validate() const {
  VDEPTH_REQUIRE(feature_channels >= 16, "BackboneConfig.feature_channels must be >= 16");
  VDEPTH_REQUIRE(output_stride == 2 || output_stride == 4, "BackboneConfig.output_stride must be 2 or 4");
  VDEPTH_REQUIRE(encoder_channels[0] >= 1, "BackboneConfig.encoder_channels must be positive");
  for (std::size_t i = 1; i < 4; ++i)
    VDEPTH_REQUIRE(encoder_channels[i] >= encoder_channels[i - 1],
                   "BackboneConfig.encoder_channels must be nondecreasing");
  VDEPTH_REQUIRE(encoder_channels[3] >= 8, "BackboneConfig.encoder_channels: last stage needs >= 8 channels");
  VDEPTH_REQUIRE(mff_channels >= 1, "BackboneConfig.mff_channels must be positive");
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto conv_bn = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t stride) {
    return ConvBn{nn::Conv2d<T>(in, out, k, stride, k / 2, rng), nn::BatchNorm<T>(out)};
  };
  const auto& enc = config_.encoder_channels;
  std::size_t in = 3;
  for (std::size_t s = 0; s < 4; ++s) {
    down_[s] = conv_bn(in, enc[s], 3, 2);
    refine_[s] = conv_bn(enc[s], enc[s], 3, 1);
    in = enc[s];
  }
  const auto dec = config_.decoder_channels();
  for (std::size_t s = 0; s < 4; ++s) {
    up_[s] = conv_bn(in, dec[s], 5, 1);
    in = dec[s];
  }
  for (std::size_t s = 0; s < 4; ++s) project_[s] = conv_bn(enc[s], config_.mff_channels, 1, 1);
  fuse_ = conv_bn(dec[3] + 4 * config_.mff_channels, config_.feature_channels, 3, 1);
}

template <typename T>
Var<T> Backbone<T>::forward(const Var<T>& frames, bool training) {
  VDEPTH_REQUIRE(frames.value().rank() == 4 && frames.dim(1) == 3,
                 "backbone: expected frames [N,3,H,W], got " + shape_to_string(frames.shape()));
  const std::size_t h = frames.dim(2), w = frames.dim(3);
  VDEPTH_REQUIRE(h % 16 == 0 && w % 16 == 0 && h > 0 && w > 0,
                 "backbone: frame dims " + std::to_string(h) + "x" + std::to_string(w) + " must be divisible by 16");
  const std::size_t oh = h / config_.output_stride, ow = w / config_.output_stride;

  std::array<Var<T>, 4> stages;
  Var<T> x = frames;
  for (std::size_t s = 0; s < 4; ++s) {
    x = refine_[s](down_[s](x, training), training);
    stages[s] = x;
  }
  const auto upsamples = static_cast<std::size_t>(std::countr_zero(16 / config_.output_stride));
  for (std::size_t s = 0; s < 4; ++s) {
    if (s < upsamples) x = ops::upsample_nearest(x, 2);
    x = up_[s](x, training);
  }
  std::vector<Var<T>> parts;
  for (std::size_t s = 0; s < 4; ++s) {
    Var<T> p = project_[s](stages[s], training);
    if (p.dim(2) != oh || p.dim(3) != ow) p = ops::resize_bilinear(p, oh, ow);
    parts.push_back(p);
  }
  parts.push_back(x);
  return fuse_(ops::concat<T>(parts, 1), training);
}

template <typename T>
void Backbone<T>::collect(nn::ParameterRefs<T>& refs, const std::string& prefix) {
  auto add = [&](ConvBn& m, const std::string& name) {
    m.conv.collect(refs, prefix + name + ".conv");
    m.bn.collect(refs, prefix + name + ".bn");
  };
  for (std::size_t s = 0; s < 4; ++s) {
    add(down_[s], "encoder" + std::to_string(s) + ".down");
    add(refine_[s], "encoder" + std::to_string(s) + ".conv");
  }
  for (std::size_t s = 0; s < 4; ++s) add(up_[s], "decoder" + std::to_string(s));
  for (std::size_t s = 0; s < 4; ++s) add(project_[s], "mff.project" + std::to_string(s));
  add(fuse_, "mff.fuse");
}

template <typename T>
Tensor<T> extract_features(Backbone<T>& backbone, const Tensor<T>& frames) {
  NoGradGuard guard;
  return backbone.forward(Var<T>(frames), false).value();
}

template class Backbone<float>;
template class Backbone<double>;
template Tensor<float> extract_features(Backbone<float>&, const Tensor<float>&);
template Tensor<double> extract_features(Backbone<double>&, const Tensor<double>&);

}  // namespace vdepth
