#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "vdepth/tensor.hpp"

namespace vdepth::io {

/// Planar [3,H,W] values in [0,1] <-> 8-bit RGB PNG. Values are rounded to the
/// nearest of k/255; reading yields exactly float(k)/255.
void write_rgb_png(const std::filesystem::path& path, const Tensor<float>& rgb);
Tensor<float> read_rgb_png(const std::filesystem::path& path);

struct Gray16 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint16_t> pixels;
};

void write_gray16_png(const std::filesystem::path& path, const Gray16& image);
Gray16 read_gray16_png(const std::filesystem::path& path);

/// Byte value of an 8-bit channel holding v in [0,1].
inline std::uint8_t quantize_unit(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}

inline float dequantize_unit(std::uint8_t k) { return static_cast<float>(k) / 255.0f; }

}  // namespace vdepth::io
