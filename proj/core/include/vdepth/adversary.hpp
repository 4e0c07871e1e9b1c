#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vdepth/nn.hpp"

namespace vdepth {

struct DiscriminatorConfig {
  std::array<std::size_t, 4> block_channels{16, 32, 64, 128};
  std::size_t temporal_kernel = 3;
  double mix_prob = 0.25;
  double max_depth = 10.0;  ///< meters; depth channel is divided by it

  void validate() const;
};

/// Clips [B, 4, n, H, W]: RGB in channels 0..2, normalized depth in 3.
/// Frames are time-major, frame t of clip b at row t*B + b.
template <typename T>
Var<T> make_rgbd_clips(const Var<T>& rgb_frames, const Var<T>& depth_frames, std::size_t time_steps,
                       double max_depth);

/// Four blocks of [3D conv -> batch norm -> ReLU -> 2x2x2 max pool]; the
/// first convolution and every pool have stride 2. Then global average
/// pooling and one linear unit. Outputs the logit of P(clip is real).
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  /// clips [B, 4, n, H, W] with n >= 2 and H, W >= 32 -> logits [B, 1].
  Var<T> logits(const Var<T>& clips, bool training);
  /// Output of the last block, before global pooling.
  Var<T> features(const Var<T>& clips, bool training);
  /// sigmoid(logits); inference mode.
  std::vector<double> probabilities(const Tensor<T>& clips);

  const DiscriminatorConfig& config() const { return config_; }
  void collect(nn::ParameterRefs<T>& refs, const std::string& prefix);

 private:
  DiscriminatorConfig config_;
  std::array<nn::Conv3d<T>, 4> conv_;
  std::array<nn::BatchNorm<T>, 4> bn_;
  nn::Linear<T> fc_;
};

/// Per frame (leading axis), with probability p take the real frame instead
/// of the fake one. Deterministic in seed. `substituted`, when given,
/// receives the number of replaced frames.
template <typename T>
Tensor<T> mix_ground_truth(const Tensor<T>& fake, const Tensor<T>& real, double p, std::uint64_t seed,
                           std::size_t* substituted = nullptr);

/// -log(d_real) - log(1 - d_fake), averaged over the pairs.
double discriminator_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake);
inline double discriminator_loss(double d_real, double d_fake) {
  return discriminator_loss(std::vector<double>{d_real}, std::vector<double>{d_fake});
}
/// -log(d_fake), averaged.
double generator_temporal_loss(const std::vector<double>& d_fake);
inline double generator_temporal_loss(double d_fake) {
  return generator_temporal_loss(std::vector<double>{d_fake});
}

// The same losses on logits, through softplus for numerical stability.
template <typename T> Var<T> discriminator_loss(const Var<T>& real_logits, const Var<T>& fake_logits);
template <typename T> Var<T> generator_temporal_loss(const Var<T>& fake_logits);

}  // namespace vdepth
