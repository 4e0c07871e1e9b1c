#include "vdepth/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "vdepth/image_io.hpp"

namespace vdepth {
namespace fs = std::filesystem;

namespace {

float quantize_depth(double depth_m, double scale) {
  const auto raw = static_cast<std::uint32_t>(std::lround(depth_m * scale));
  return static_cast<float>(raw) / static_cast<float>(scale);
}

double center_x(std::size_t j) { return static_cast<double>(j) + 0.5; }

// Source index for nearest-neighbor resampling with half-pixel centers.
std::size_t nearest_src(std::size_t i, std::size_t in, std::size_t out) {
  const auto s = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out));
  return std::min(s, in - 1);
}

}  // namespace

void SceneSpec::validate() const {
  VDEPTH_REQUIRE(min_depth > 0.0, "SceneSpec.depth_range: min must be > 0");
  VDEPTH_REQUIRE(min_depth < max_depth, "SceneSpec.depth_range: min must be < max");
  VDEPTH_REQUIRE(height >= 16 && height % 2 == 0, "SceneSpec.resolution: height must be >= 16 and even");
  VDEPTH_REQUIRE(width >= 16 && width % 2 == 0, "SceneSpec.resolution: width must be >= 16 and even");
  VDEPTH_REQUIRE(background_depth > 0.0 && std::isfinite(background_depth),
                 "SceneSpec.background_depth: must be positive and finite");
  VDEPTH_REQUIRE(motion_amplitude >= 0.0 && std::isfinite(motion_amplitude),
                 "SceneSpec.motion_amplitude: must be nonnegative");
  VDEPTH_REQUIRE(std::isfinite(camera_pan[0]) && std::isfinite(camera_pan[1]), "SceneSpec.camera_pan: must be finite");
  VDEPTH_REQUIRE(rgb_noise >= 0.0, "SceneSpec.rgb_noise: must be nonnegative");
}

void DepthSequenceSample::validate() const {
  VDEPTH_REQUIRE(!rgb.empty(), "sample has no frames");
  VDEPTH_REQUIRE(rgb.size() == depth.size() && depth.size() == valid_mask.size(),
                 "sample rgb/depth/mask frame counts differ");
  const std::size_t h = height(), w = width();
  for (std::size_t t = 0; t < size(); ++t) {
    VDEPTH_REQUIRE(rgb[t].shape() == (Shape{3, h, w}), "rgb frame " + std::to_string(t) + " has shape " +
                                                           shape_to_string(rgb[t].shape()));
    VDEPTH_REQUIRE(depth[t].shape() == (Shape{h, w}), "depth frame dims differ");
    VDEPTH_REQUIRE(valid_mask[t].shape() == (Shape{h, w}), "mask frame dims differ");
    for (std::size_t i = 0; i < h * w; ++i)
      if (valid_mask[t][i])
        VDEPTH_REQUIRE(depth[t][i] > 0.0f && std::isfinite(depth[t][i]),
                       "valid depth must be positive and finite (frame " + std::to_string(t) + ")");
  }
}

DepthSequenceSample DepthSequenceSample::window(std::size_t start, std::size_t n) const {
  VDEPTH_REQUIRE(n >= 1 && start + n <= size(), "window out of range");
  DepthSequenceSample out;
  out.fps = fps;
  for (std::size_t t = start; t < start + n; ++t) {
    out.rgb.push_back(rgb[t]);
    out.depth.push_back(depth[t]);
    out.valid_mask.push_back(valid_mask[t]);
    out.frame_ids.push_back(frame_ids.empty() ? static_cast<int>(t) : frame_ids[t]);
  }
  return out;
}

bool SceneObject::covers(double x, double y, double ox, double oy) const {
  const double dx = x - ox, dy = y - oy;
  if (shape == ObjectShape::Disc) return dx * dx + dy * dy <= half_w * half_w;
  return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
}

std::array<float, 3> depth_color(double depth, double min_depth, double max_depth) {
  const double t = (depth - min_depth) / (max_depth - min_depth);
  auto c = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
  return {c(0.9 - 0.6 * t), c(0.25 + 0.5 * std::sin(std::numbers::pi * std::clamp(t, 0.0, 1.2))), c(0.2 + 0.6 * t)};
}

Scene sample_scene(const SceneSpec& spec, std::size_t n_frames, std::uint64_t seed) {
  spec.validate();
  VDEPTH_REQUIRE(n_frames >= 1, "n_frames must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene scene;
  scene.spec = spec;
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  for (std::size_t k = 0; k < spec.n_objects; ++k) {
    SceneObject o;
    o.shape = unit(rng) < 0.5 ? ObjectShape::Rectangle : ObjectShape::Disc;
    o.half_w = uniform(0.08, 0.2) * w;
    o.half_h = uniform(0.08, 0.2) * h;
    o.cx = uniform(0.1, 0.9) * w;
    o.cy = uniform(0.1, 0.9) * h;
    const double heading = uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = spec.motion_amplitude * uniform(0.5, 1.0);
    o.vx = speed * std::cos(heading);
    o.vy = speed * std::sin(heading);
    o.depth = uniform(spec.min_depth, spec.max_depth);
    o.color = depth_color(o.depth, spec.min_depth, spec.max_depth);
    for (auto& ch : o.color) ch = std::clamp(ch + static_cast<float>(uniform(-0.04, 0.04)), 0.0f, 1.0f);
    o.texture_freq = uniform(0.3, 0.8);
    o.texture_phase = uniform(0.0, 2.0 * std::numbers::pi);
    scene.objects.push_back(o);
  }
  const double jitter = 0.15 * spec.motion_amplitude;
  scene.jitter.resize(n_frames);
  for (auto& frame : scene.jitter) {
    frame.resize(spec.n_objects);
    for (auto& j : frame) j = {uniform(-jitter, jitter), uniform(-jitter, jitter)};
  }
  scene.background_color = depth_color(spec.background_depth, spec.min_depth, spec.max_depth);
  scene.background_freq = uniform(0.15, 0.3);
  scene.noise_seed = rng();
  return scene;
}

DepthSequenceSample render_scene(const Scene& scene, std::size_t n_frames) {
  const SceneSpec& spec = scene.spec;
  const std::size_t h = spec.height, w = spec.width;
  VDEPTH_REQUIRE(scene.jitter.empty() || scene.jitter.size() >= n_frames, "scene jitter shorter than n_frames");

  DepthSequenceSample out;
  out.fps = 30.0;
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double td = static_cast<double>(t);
    const double pan_x = spec.camera_pan[0] * td, pan_y = spec.camera_pan[1] * td;
    std::vector<std::array<double, 2>> pos(scene.objects.size());
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
      const auto& o = scene.objects[k];
      const auto j = scene.jitter.empty() ? std::array<double, 2>{0, 0} : scene.jitter[t][k];
      pos[k] = {o.cx + o.vx * td + pan_x + j[0], o.cy + o.vy * td + pan_y + j[1]};
    }

    Tensor<float> rgb({3, h, w});
    Tensor<float> depth({h, w});
    Mask mask({h, w}, 1);
    std::mt19937_64 noise_rng(scene.noise_seed + 0x9E3779B97F4A7C15ULL * (t + 1));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.rgb_noise));

    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t jx = 0; jx < w; ++jx) {
        const double x = center_x(jx), y = center_x(i);
        double z = spec.background_depth;
        const SceneObject* hit = nullptr;
        std::size_t hit_k = 0;
        for (std::size_t k = 0; k < scene.objects.size(); ++k) {
          const auto& o = scene.objects[k];
          if (o.depth < z && o.covers(x, y, pos[k][0], pos[k][1])) {
            z = o.depth;
            hit = &o;
            hit_k = k;
          }
        }
        std::array<float, 3> color;
        if (hit) {
          const double u = x - pos[hit_k][0], v = y - pos[hit_k][1];
          const auto tex = static_cast<float>(0.8 + 0.2 * std::sin(hit->texture_freq * (u + 0.7 * v) + hit->texture_phase));
          for (int c = 0; c < 3; ++c) color[c] = hit->color[c] * tex;
        } else {
          const double bf = scene.background_freq;
          const auto tex = static_cast<float>(0.75 + 0.25 * std::sin(bf * (x - pan_x)) * std::cos(bf * (y - pan_y)));
          for (int c = 0; c < 3; ++c) color[c] = scene.background_color[c] * tex;
        }
        const std::size_t p = i * w + jx;
        for (std::size_t c = 0; c < 3; ++c) {
          float v = color[c];
          if (spec.rgb_noise > 0.0) v += noise(noise_rng);
          rgb[c * h * w + p] = io::dequantize_unit(io::quantize_unit(v));
        }
        depth[p] = quantize_depth(z, kDefaultDepthScale);
      }
    out.rgb.push_back(std::move(rgb));
    out.depth.push_back(std::move(depth));
    out.valid_mask.push_back(std::move(mask));
    out.frame_ids.push_back(static_cast<int>(t));
  }
  return out;
}

DepthSequenceSample generate_synthetic_sequence(const SceneSpec& spec, std::size_t n_frames, std::uint64_t seed) {
  return render_scene(sample_scene(spec, n_frames, seed), n_frames);
}

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

void save_sequence(const DepthSequenceSample& sample, const fs::path& root, const std::string& id,
                   double depth_scale) {
  sample.validate();
  VDEPTH_REQUIRE(depth_scale > 0.0, "depth_scale must be positive");
  const fs::path dir = root / id;
  std::error_code ec;
  fs::create_directories(dir / "rgb", ec);
  fs::create_directories(dir / "depth", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  for (std::size_t t = 0; t < sample.size(); ++t) {
    io::write_rgb_png(dir / "rgb" / frame_filename(t), sample.rgb[t]);
    io::Gray16 d;
    d.height = sample.height();
    d.width = sample.width();
    d.pixels.resize(d.height * d.width);
    for (std::size_t i = 0; i < d.pixels.size(); ++i) {
      if (!sample.valid_mask[t][i]) {
        d.pixels[i] = 0;
        continue;
      }
      const double raw = std::round(static_cast<double>(sample.depth[t][i]) * depth_scale);
      d.pixels[i] = static_cast<std::uint16_t>(std::clamp(raw, 1.0, 65535.0));
    }
    io::write_gray16_png(dir / "depth" / frame_filename(t), d);
  }
  nlohmann::json meta{{"fps", sample.fps}, {"depth_scale", depth_scale}};
  std::ofstream f(dir / "meta.json");
  if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
  f << meta.dump(2) << "\n";
}

SequenceMeta read_sequence_meta(const fs::path& root, const std::string& id) {
  const fs::path p = root / id / "meta.json";
  std::ifstream f(p);
  if (!f) throw IoError("missing file " + p.string());
  SequenceMeta meta;
  try {
    const auto j = nlohmann::json::parse(f);
    meta.fps = j.value("fps", 30.0);
    meta.depth_scale = j.value("depth_scale", kDefaultDepthScale);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  if (!(meta.depth_scale > 0.0)) throw FormatError(p.string() + ": depth_scale must be positive");
  return meta;
}

std::size_t sequence_length(const fs::path& root, const std::string& id) {
  const fs::path dir = root / id / "rgb";
  if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
  std::size_t n = 0;
  while (fs::exists(dir / frame_filename(n))) ++n;
  return n;
}

std::vector<std::string> list_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("missing dataset directory " + root.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

DepthSequenceSample load_sequence(const fs::path& root, const std::string& id, std::size_t start,
                                  std::size_t n_frames) {
  VDEPTH_REQUIRE(n_frames >= 1, "load_sequence: n_frames must be >= 1");
  const SequenceMeta meta = read_sequence_meta(root, id);
  const std::size_t length = sequence_length(root, id);
  VDEPTH_REQUIRE(start + n_frames <= length, "load_sequence: frames [" + std::to_string(start) + ", " +
                                                  std::to_string(start + n_frames) + ") exceed sequence length " +
                                                  std::to_string(length));
  DepthSequenceSample out;
  out.fps = meta.fps;
  const fs::path dir = root / id;
  const auto scale = static_cast<float>(meta.depth_scale);
  for (std::size_t t = start; t < start + n_frames; ++t) {
    Tensor<float> rgb = io::read_rgb_png(dir / "rgb" / frame_filename(t));
    const fs::path dpath = dir / "depth" / frame_filename(t);
    io::Gray16 raw = io::read_gray16_png(dpath);
    if (raw.height != rgb.dim(1) || raw.width != rgb.dim(2))
      throw FormatError(dpath.string() + ": depth is " + std::to_string(raw.width) + "x" + std::to_string(raw.height) +
                        " but rgb is " + std::to_string(rgb.dim(2)) + "x" + std::to_string(rgb.dim(1)));
    if (!out.rgb.empty() && rgb.shape() != out.rgb.front().shape())
      throw FormatError(dpath.string() + ": frame dimensions change within the sequence");
    Tensor<float> depth({raw.height, raw.width});
    Mask mask({raw.height, raw.width});
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
      depth[i] = static_cast<float>(raw.pixels[i]) / scale;
      mask[i] = raw.pixels[i] > 0 ? 1 : 0;
    }
    out.rgb.push_back(std::move(rgb));
    out.depth.push_back(std::move(depth));
    out.valid_mask.push_back(std::move(mask));
    out.frame_ids.push_back(static_cast<int>(t));
  }
  return out;
}

// ---- augmentation ----------------------------------------------------------

AugmentParams draw_augment_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentParams p;
  p.flip = unit(rng) < 0.5;
  p.angle_deg = -5.0 + 10.0 * unit(rng);
  p.brightness = 0.6 + 0.8 * unit(rng);
  p.contrast = 0.6 + 0.8 * unit(rng);
  p.saturation = 0.6 + 0.8 * unit(rng);
  return p;
}

namespace {

void flip_frame(Tensor<float>& rgb, Tensor<float>& depth, Mask& mask) {
  const std::size_t h = depth.dim(0), w = depth.dim(1);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w / 2; ++j) {
      const std::size_t a = i * w + j, b = i * w + (w - 1 - j);
      std::swap(depth[a], depth[b]);
      std::swap(mask[a], mask[b]);
      for (std::size_t c = 0; c < 3; ++c) std::swap(rgb[c * h * w + a], rgb[c * h * w + b]);
    }
}

void rotate_frame(Tensor<float>& rgb, Tensor<float>& depth, Mask& mask, double angle_deg) {
  const std::size_t h = depth.dim(0), w = depth.dim(1);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(a), sn = std::sin(a);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  Tensor<float> rgb_out({3, h, w});
  Tensor<float> depth_out({h, w});
  Mask mask_out({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      const std::size_t p = i * w + j;
      if (sx < 0.0 || sy < 0.0 || sx > static_cast<double>(w - 1) || sy > static_cast<double>(h - 1)) continue;
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const float* src = rgb.data() + c * h * w;
        const double v = (src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx) * (1 - fy) +
                         (src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx) * fy;
        rgb_out[c * h * w + p] = static_cast<float>(v);
      }
      const auto nx = static_cast<std::size_t>(std::lround(sx)), ny = static_cast<std::size_t>(std::lround(sy));
      depth_out[p] = mask[ny * w + nx] ? depth[ny * w + nx] : 0.0f;
      mask_out[p] = mask[ny * w + nx];
    }
  rgb = std::move(rgb_out);
  depth = std::move(depth_out);
  mask = std::move(mask_out);
}

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void color_jitter(Tensor<float>& rgb, double brightness, double contrast, double saturation) {
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  float* r = rgb.data();
  float* g = r + plane;
  float* b = g + plane;
  auto clamp01 = [](float v) { return std::clamp(v, 0.0f, 1.0f); };
  if (brightness != 1.0) {
    const auto s = static_cast<float>(brightness);
    for (std::size_t i = 0; i < 3 * plane; ++i) r[i] = clamp01(r[i] * s);
  }
  if (contrast != 1.0) {
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += luma(r[i], g[i], b[i]);
    const auto mean = static_cast<float>(m / static_cast<double>(plane));
    const auto s = static_cast<float>(contrast);
    for (std::size_t i = 0; i < 3 * plane; ++i) r[i] = clamp01(mean + (r[i] - mean) * s);
  }
  if (saturation != 1.0) {
    const auto s = static_cast<float>(saturation);
    for (std::size_t i = 0; i < plane; ++i) {
      const float y = luma(r[i], g[i], b[i]);
      r[i] = clamp01(y + (r[i] - y) * s);
      g[i] = clamp01(y + (g[i] - y) * s);
      b[i] = clamp01(y + (b[i] - y) * s);
    }
  }
}

}  // namespace

DepthSequenceSample apply_augment(const DepthSequenceSample& sample, const AugmentParams& params) {
  sample.validate();
  DepthSequenceSample out = sample;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (params.flip) flip_frame(out.rgb[t], out.depth[t], out.valid_mask[t]);
    if (params.angle_deg != 0.0) rotate_frame(out.rgb[t], out.depth[t], out.valid_mask[t], params.angle_deg);
    color_jitter(out.rgb[t], params.brightness, params.contrast, params.saturation);
  }
  return out;
}

DepthSequenceSample augment(const DepthSequenceSample& sample, std::uint64_t seed) {
  return apply_augment(sample, draw_augment_params(seed));
}

DepthSequenceSample crop_resize(const DepthSequenceSample& sample, const CropPolicy& policy) {
  sample.validate();
  const std::size_t h = sample.height(), w = sample.width();
  VDEPTH_REQUIRE(policy.resize_h >= 1 && policy.resize_w >= 1, "crop_resize: resize target must be non-empty");
  VDEPTH_REQUIRE(policy.resize_h <= h && policy.resize_w <= w, "crop_resize: resize target exceeds original frame");
  VDEPTH_REQUIRE(policy.crop_h >= 1 && policy.crop_w >= 1, "crop_resize: crop must be non-empty");
  VDEPTH_REQUIRE(policy.crop_h <= policy.resize_h && policy.crop_w <= policy.resize_w,
                 "crop_resize: crop larger than resized frame");
  const std::size_t rh = policy.resize_h, rw = policy.resize_w, ch = policy.crop_h, cw = policy.crop_w;

  std::size_t oy = (rh - ch) / 2, ox = (rw - cw) / 2;
  if (policy.random) {
    std::mt19937_64 rng(policy.seed);
    oy = std::uniform_int_distribution<std::size_t>(0, rh - ch)(rng);
    ox = std::uniform_int_distribution<std::size_t>(0, rw - cw)(rng);
  }

  // Half-pixel bilinear source coordinates per output row / column.
  auto axis = [](std::size_t in, std::size_t out) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> m(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto l = static_cast<std::size_t>(s);
      m[i] = {l, std::min(l + 1, in - 1), s - static_cast<double>(l)};
    }
    return m;
  };
  const bool same = rh == h && rw == w;
  const auto my = axis(h, rh);
  const auto mx = axis(w, rw);

  DepthSequenceSample out;
  out.fps = sample.fps;
  out.frame_ids = sample.frame_ids;
  for (std::size_t t = 0; t < sample.size(); ++t) {
    Tensor<float> rgb({3, ch, cw});
    Tensor<float> depth({ch, cw});
    Mask mask({ch, cw});
    for (std::size_t i = 0; i < ch; ++i)
      for (std::size_t j = 0; j < cw; ++j) {
        const std::size_t ri = i + oy, rj = j + ox;
        const std::size_t p = i * cw + j;
        if (same) {
          for (std::size_t c = 0; c < 3; ++c) rgb[c * ch * cw + p] = sample.rgb[t][c * h * w + ri * w + rj];
          depth[p] = sample.depth[t][ri * w + rj];
          mask[p] = sample.valid_mask[t][ri * w + rj];
          continue;
        }
        const auto [y0, y1, fy] = my[ri];
        const auto [x0, x1, fx] = mx[rj];
        for (std::size_t c = 0; c < 3; ++c) {
          const float* src = sample.rgb[t].data() + c * h * w;
          const double v = (src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx) * (1 - fy) +
                           (src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx) * fy;
          rgb[c * ch * cw + p] = static_cast<float>(v);
        }
        const std::size_t sy = nearest_src(ri, h, rh), sx = nearest_src(rj, w, rw);
        depth[p] = sample.depth[t][sy * w + sx];
        mask[p] = sample.valid_mask[t][sy * w + sx];
      }
    out.rgb.push_back(std::move(rgb));
    out.depth.push_back(std::move(depth));
    out.valid_mask.push_back(std::move(mask));
  }
  return out;
}

}  // namespace vdepth
