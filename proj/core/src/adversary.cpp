#include "vdepth/adversary.hpp"

#include <cmath>
#include <random>

#include "vdepth/error.hpp"

namespace vdepth {

void DiscriminatorConfig::validate() const {
  for (std::size_t c : block_channels) VDEPTH_REQUIRE(c >= 1, "DiscriminatorConfig.block_channels must be positive");
  VDEPTH_REQUIRE(temporal_kernel % 2 == 1, "DiscriminatorConfig.temporal_kernel must be odd");
  VDEPTH_REQUIRE(mix_prob >= 0.0 && mix_prob <= 1.0, "DiscriminatorConfig.mix_prob must lie in [0, 1]");
  VDEPTH_REQUIRE(max_depth > 0.0 && std::isfinite(max_depth), "DiscriminatorConfig.max_depth must be positive");
}

template <typename T>
Var<T> make_rgbd_clips(const Var<T>& rgb_frames, const Var<T>& depth_frames, std::size_t time_steps,
                       double max_depth) {
  VDEPTH_REQUIRE(rgb_frames.value().rank() == 4 && rgb_frames.dim(1) == 3, "rgbd clip: rgb frames must be [N,3,H,W]");
  VDEPTH_REQUIRE(depth_frames.value().rank() == 4 && depth_frames.dim(1) == 1 &&
                     depth_frames.dim(0) == rgb_frames.dim(0) && depth_frames.dim(2) == rgb_frames.dim(2) &&
                     depth_frames.dim(3) == rgb_frames.dim(3),
                 "rgbd clip: depth frames " + shape_to_string(depth_frames.shape()) + " do not match rgb " +
                     shape_to_string(rgb_frames.shape()));
  const Var<T> parts[] = {rgb_frames, ops::scale(depth_frames, static_cast<T>(1.0 / max_depth))};
  return ops::frames_to_clips(ops::concat<T>(parts, 1), time_steps);
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in = 4;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t s = b == 0 ? 2 : 1;
    conv_[b] = nn::Conv3d<T>(in, config_.block_channels[b], config_.temporal_kernel, 3, {s, s, s}, rng);
    bn_[b] = nn::BatchNorm<T>(config_.block_channels[b]);
    in = config_.block_channels[b];
  }
  fc_ = nn::Linear<T>(in, 1, rng);
}

template <typename T>
Var<T> Discriminator<T>::features(const Var<T>& clips, bool training) {
  VDEPTH_REQUIRE(clips.value().rank() == 5 && clips.dim(1) == 4,
                 "discriminator: expected clips [B,4,n,H,W], got " + shape_to_string(clips.shape()));
  VDEPTH_REQUIRE(clips.dim(2) >= 2, "discriminator: clips need at least 2 frames");
  VDEPTH_REQUIRE(clips.dim(3) >= 32 && clips.dim(4) >= 32,
                 "discriminator: spatial dims " + std::to_string(clips.dim(3)) + "x" + std::to_string(clips.dim(4)) +
                     " do not survive the 32x stride schedule");
  Var<T> x = clips;
  for (std::size_t b = 0; b < 4; ++b) x = ops::max_pool3d(ops::relu(bn_[b](conv_[b](x), training)));
  return x;
}

template <typename T>
Var<T> Discriminator<T>::logits(const Var<T>& clips, bool training) {
  return fc_(ops::global_avg_pool(features(clips, training)));
}

template <typename T>
std::vector<double> Discriminator<T>::probabilities(const Tensor<T>& clips) {
  NoGradGuard guard;
  const auto z = logits(Var<T>(clips), false);
  std::vector<double> p;
  for (T v : z.value().values()) p.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  return p;
}

template <typename T>
void Discriminator<T>::collect(nn::ParameterRefs<T>& refs, const std::string& prefix) {
  for (std::size_t b = 0; b < 4; ++b) {
    conv_[b].collect(refs, prefix + "block" + std::to_string(b) + ".conv");
    bn_[b].collect(refs, prefix + "block" + std::to_string(b) + ".bn");
  }
  fc_.collect(refs, prefix + "fc");
}

template <typename T>
Tensor<T> mix_ground_truth(const Tensor<T>& fake, const Tensor<T>& real, double p, std::uint64_t seed,
                           std::size_t* substituted) {
  VDEPTH_REQUIRE(fake.shape() == real.shape(), "mix_ground_truth: fake " + shape_to_string(fake.shape()) +
                                                   " vs real " + shape_to_string(real.shape()));
  VDEPTH_REQUIRE(p >= 0.0 && p <= 1.0, "mix_ground_truth: p must lie in [0, 1]");
  VDEPTH_REQUIRE(fake.rank() >= 1, "mix_ground_truth: frames need a leading axis");
  Tensor<T> out = fake;
  const std::size_t frames = fake.dim(0), frame_size = frames == 0 ? 0 : fake.size() / frames;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t count = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    if (u(rng) >= p) continue;
    std::copy(real.data() + f * frame_size, real.data() + (f + 1) * frame_size, out.data() + f * frame_size);
    ++count;
  }
  if (substituted) *substituted = count;
  return out;
}

double discriminator_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
  VDEPTH_REQUIRE(!d_real.empty() && d_real.size() == d_fake.size(), "discriminator_loss: need equal non-empty batches");
  double s = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    VDEPTH_REQUIRE(d_real[i] > 0.0 && d_real[i] < 1.0 && d_fake[i] > 0.0 && d_fake[i] < 1.0,
                   "discriminator_loss: probabilities must lie in (0, 1)");
    s += -std::log(d_real[i]) - std::log1p(-d_fake[i]);
  }
  return s / static_cast<double>(d_real.size());
}

double generator_temporal_loss(const std::vector<double>& d_fake) {
  VDEPTH_REQUIRE(!d_fake.empty(), "generator_temporal_loss: empty batch");
  double s = 0.0;
  for (double d : d_fake) {
    VDEPTH_REQUIRE(d > 0.0 && d < 1.0, "generator_temporal_loss: probabilities must lie in (0, 1)");
    s -= std::log(d);
  }
  return s / static_cast<double>(d_fake.size());
}

// -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z).
template <typename T>
Var<T> discriminator_loss(const Var<T>& real_logits, const Var<T>& fake_logits) {
  VDEPTH_REQUIRE(real_logits.shape() == fake_logits.shape(), "discriminator_loss: batch shapes differ");
  return ops::add(ops::mean(ops::softplus(ops::scale(real_logits, T{-1}))), ops::mean(ops::softplus(fake_logits)));
}

template <typename T>
Var<T> generator_temporal_loss(const Var<T>& fake_logits) {
  return ops::mean(ops::softplus(ops::scale(fake_logits, T{-1})));
}

#define VDEPTH_INSTANTIATE(T)                                                                                 \
  template class Discriminator<T>;                                                                           \
  template Var<T> make_rgbd_clips(const Var<T>&, const Var<T>&, std::size_t, double);                       \
  template Tensor<T> mix_ground_truth(const Tensor<T>&, const Tensor<T>&, double, std::uint64_t, std::size_t*); \
  template Var<T> discriminator_loss(const Var<T>&, const Var<T>&);                                          \
  template Var<T> generator_temporal_loss(const Var<T>&);

VDEPTH_INSTANTIATE(float)
VDEPTH_INSTANTIATE(double)

}  // namespace vdepth
