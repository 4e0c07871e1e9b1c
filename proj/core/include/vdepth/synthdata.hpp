#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdepth/tensor.hpp"

namespace vdepth {

/// Parameters of a procedural RGB-D scene: flat rectangles and discs at
/// constant depth drifting over a textured background.
struct SceneSpec {
  std::size_t n_objects = 4;
  double min_depth = 1.0;  ///< meters
  double max_depth = 5.0;  ///< meters
  double motion_amplitude = 1.0;  ///< object speed, pixels/frame
  std::size_t height = 64;
  std::size_t width = 64;
  std::array<double, 2> camera_pan{0.5, 0.0};  ///< (x, y) pixels/frame
  double background_depth = 8.0;  ///< meters
  double rgb_noise = 0.04;  ///< std-dev of per-frame sensor noise on RGB

  void validate() const;
};

/// n aligned frames. rgb frames are planar [3,H,W] in [0,1], depth [H,W] in
/// meters, masks [H,W] with 1 = valid.
struct DepthSequenceSample {
  std::vector<Tensor<float>> rgb;
  std::vector<Tensor<float>> depth;
  std::vector<Mask> valid_mask;
  std::vector<int> frame_ids;
  double fps = 30.0;

  std::size_t size() const { return rgb.size(); }
  std::size_t height() const { return depth.empty() ? 0 : depth.front().dim(0); }
  std::size_t width() const { return depth.empty() ? 0 : depth.front().dim(1); }

  /// Throws PreconditionError when the sample breaks its invariants.
  void validate() const;

  /// Frames [start, start + n).
  DepthSequenceSample window(std::size_t start, std::size_t n) const;
};

enum class ObjectShape { Rectangle, Disc };

struct SceneObject {
  ObjectShape shape = ObjectShape::Rectangle;
  double cx = 0, cy = 0;  ///< center at frame 0, pixels
  double half_w = 4, half_h = 4;  ///< rectangle half extents; disc radius is half_w
  double vx = 0, vy = 0;  ///< pixels/frame, camera pan excluded
  double depth = 1.0;
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};
  double texture_freq = 0.5;
  double texture_phase = 0.0;

  bool covers(double x, double y, double ox, double oy) const;
};

/// A fully specified scene; rendering is a pure function of it.
struct Scene {
  SceneSpec spec;
  std::vector<SceneObject> objects;
  /// jitter[t][k]: offset of object k at frame t on top of constant velocity.
  std::vector<std::vector<std::array<double, 2>>> jitter;
  std::array<float, 3> background_color{0.3f, 0.3f, 0.4f};
  double background_freq = 0.2;
  std::uint64_t noise_seed = 0;
};

inline constexpr double kDefaultDepthScale = 1000.0;

/// Reference color for a depth in [min, max]; appearance therefore predicts depth.
std::array<float, 3> depth_color(double depth, double min_depth, double max_depth);

Scene sample_scene(const SceneSpec& spec, std::size_t n_frames, std::uint64_t seed);
DepthSequenceSample render_scene(const Scene& scene, std::size_t n_frames);

/// Deterministic in (spec, n_frames, seed). RGB is quantized to 8 bits and
/// depth to 1/kDefaultDepthScale so the sample survives a disk round trip.
DepthSequenceSample generate_synthetic_sequence(const SceneSpec& spec, std::size_t n_frames, std::uint64_t seed);

// ---- on-disk layout ------------------------------------------------------
// <root>/<id>/rgb/%06d.png     8-bit RGB
// <root>/<id>/depth/%06d.png   16-bit gray, depth_m = raw / depth_scale, 0 = invalid
// <root>/<id>/meta.json        {"fps": .., "depth_scale": ..}

struct SequenceMeta {
  double fps = 30.0;
  double depth_scale = kDefaultDepthScale;
};

void save_sequence(const DepthSequenceSample& sample, const std::filesystem::path& root, const std::string& id,
                   double depth_scale = kDefaultDepthScale);
SequenceMeta read_sequence_meta(const std::filesystem::path& root, const std::string& id);
std::size_t sequence_length(const std::filesystem::path& root, const std::string& id);
std::vector<std::string> list_sequences(const std::filesystem::path& root);

DepthSequenceSample load_sequence(const std::filesystem::path& root, const std::string& id, std::size_t start,
                                  std::size_t n_frames);

std::string frame_filename(std::size_t index);

// ---- augmentation --------------------------------------------------------

/// One draw shared by every frame of a sequence.
struct AugmentParams {
  bool flip = false;
  double angle_deg = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

AugmentParams draw_augment_params(std::uint64_t seed);
DepthSequenceSample apply_augment(const DepthSequenceSample& sample, const AugmentParams& params);
DepthSequenceSample augment(const DepthSequenceSample& sample, std::uint64_t seed);

struct CropPolicy {
  std::size_t resize_h = 0, resize_w = 0;
  std::size_t crop_h = 0, crop_w = 0;
  bool random = false;  ///< training: random offset; evaluation: centered
  std::uint64_t seed = 0;
};

/// Bilinear resize for RGB, nearest for depth and mask, then one crop shared
/// by all frames.
DepthSequenceSample crop_resize(const DepthSequenceSample& sample, const CropPolicy& policy);

}  // namespace vdepth
