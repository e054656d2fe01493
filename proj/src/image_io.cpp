#include "needletrack/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "needletrack/errors.hpp"

namespace needletrack {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  *text = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const Tensor<float>& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
  std::size_t channels = 1, h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
    channels = image.dim(0);
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw ShapeError("write_png expects (H,W), (1,H,W) or (3,H,W), got " + to_string(image.shape()));
  }

  const double top = bit_depth == 8 ? 255.0 : 65535.0;
  const std::size_t bytes_per_sample = bit_depth / 8;
  const std::size_t plane = h * w;
  std::vector<png_byte> pixels(plane * channels * bytes_per_sample);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(std::round(static_cast<double>(image[c * plane + i])), 0.0, top);
      const auto q = static_cast<unsigned>(v);
      const std::size_t at = (i * channels + c) * bytes_per_sample;
      if (bit_depth == 8) {
        pixels[at] = static_cast<png_byte>(q);
      } else {
        pixels[at] = static_cast<png_byte>(q >> 8);
        pixels[at + 1] = static_cast<png_byte>(q & 0xff);
      }
    }
  }

  File file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot open '" + path.string() + "' for writing");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("writing '" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (std::size_t r = 0; r < h; ++r) rows[r] = pixels.data() + r * w * channels * bytes_per_sample;
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> read_png(const std::filesystem::path& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image '" + path.string() + "'");
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("'" + path.string() + "' is not a PNG file");
  }

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("reading '" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  pixels.resize(row_bytes * h);
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = pixels.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t plane = static_cast<std::size_t>(w) * h;
  Tensor<float> image(channels == 1 ? Shape{h, w} : Shape{channels, h, w});
  const std::size_t bytes_per_sample = depth == 16 ? 2 : 1;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = (i * channels + c) * bytes_per_sample;
      const unsigned v = depth == 16 ? (unsigned{pixels[at]} << 8) | pixels[at + 1] : pixels[at];
      image[c * plane + i] = static_cast<float>(v);
    }
  }
  return image;
}

}  // namespace needletrack
