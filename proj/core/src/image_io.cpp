#include "vdepth/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

namespace vdepth::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw FormatError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

struct PngImage {
  std::size_t width = 0, height = 0;
  int channels = 0, bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // rows packed, 16-bit samples in host order
};

void write_png(const std::filesystem::path& path, std::size_t w, std::size_t h, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& bytes, std::size_t row_bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    for (std::size_t r = 0; r < h; ++r)
      png_write_row(png, const_cast<png_bytep>(bytes.data() + r * row_bytes));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

PngImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  PngImage img;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && img.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (img.bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);
    img.channels = png_get_channels(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    img.bytes.resize(row_bytes * img.height);
    std::vector<png_bytep> rows(img.height);
    for (std::size_t r = 0; r < img.height; ++r) rows[r] = img.bytes.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (const FormatError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": " + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

void write_rgb_png(const std::filesystem::path& path, const Tensor<float>& rgb) {
  VDEPTH_REQUIRE(rgb.rank() == 3 && rgb.dim(0) == 3, "write_rgb_png expects [3,H,W]");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<std::uint8_t> bytes(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) bytes[i * 3 + c] = quantize_unit(rgb[c * h * w + i]);
  write_png(path, w, h, PNG_COLOR_TYPE_RGB, 8, bytes, w * 3);
}

Tensor<float> read_rgb_png(const std::filesystem::path& path) {
  PngImage img = read_png(path);
  if (img.bit_depth != 8 || (img.channels != 3 && img.channels != 4))
    throw FormatError(path.string() + ": expected 8-bit RGB, got " + std::to_string(img.channels) + " channels at " +
                      std::to_string(img.bit_depth) + " bits");
  const std::size_t h = img.height, w = img.width;
  Tensor<float> rgb({3, h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) rgb[c * h * w + i] = dequantize_unit(img.bytes[i * img.channels + c]);
  return rgb;
}

void write_gray16_png(const std::filesystem::path& path, const Gray16& image) {
  VDEPTH_REQUIRE(image.pixels.size() == image.height * image.width, "gray16 image size mismatch");
  std::vector<std::uint8_t> bytes(image.pixels.size() * 2);
  std::memcpy(bytes.data(), image.pixels.data(), bytes.size());
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, bytes, image.width * 2);
}

Gray16 read_gray16_png(const std::filesystem::path& path) {
  PngImage img = read_png(path);
  if (img.bit_depth != 16 || img.channels != 1)
    throw FormatError(path.string() + ": expected 16-bit single-channel depth image");
  Gray16 out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.height * img.width);
  std::memcpy(out.pixels.data(), img.bytes.data(), img.bytes.size());
  return out;
}

}  // namespace vdepth::io
