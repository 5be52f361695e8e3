#include "deepdeblur/io/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_rows(const std::filesystem::path& path, std::size_t h, std::size_t w, int color_type, int bit_depth,
                const std::vector<png_byte>& bytes, std::size_t row_bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or text chunks: output bytes depend only on pixel values.
  png_write_info(png, info);
  for (std::size_t r = 0; r < h; ++r) png_write_row(png, bytes.data() + r * row_bytes);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

diff::Tensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t h = png_get_image_height(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(h * row_bytes);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = buf.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  diff::Tensor out({h, w, channels});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t i = 0; i < w * channels; ++i) {
      float v;
      if (depth == 16) {
        v = static_cast<float>((rows[r][2 * i] << 8) | rows[r][2 * i + 1]) / 65535.0f;
      } else {
        v = static_cast<float>(rows[r][i]) / 255.0f;
      }
      out[r * w * channels + i] = v;
    }
  return out;
}

void write_png(const std::filesystem::path& path, const diff::Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  const std::size_t c = image.rank() == 3 ? image.dim(2) : 1;
  if (c != 1 && c != 3) throw ShapeError("write_png supports 1 or 3 channels");
  std::vector<png_byte> bytes(h * w * c);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  write_rows(path, h, w, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, 8, bytes, w * c);
}

void write_png16_max_normalized(const std::filesystem::path& path, const diff::Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (image.size() != h * w) throw ShapeError("write_png16_max_normalized expects a single-channel image");
  float peak = 0.0f;
  for (float v : image.data()) peak = std::max(peak, v);
  std::vector<png_byte> bytes(h * w * 2);
  for (std::size_t i = 0; i < h * w; ++i) {
    const float v = peak > 0.0f ? std::clamp(image[i] / peak, 0.0f, 1.0f) : 0.0f;
    const auto q = static_cast<unsigned>(std::lround(v * 65535.0f));
    bytes[2 * i] = static_cast<png_byte>(q >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(q & 0xff);
  }
  write_rows(path, h, w, PNG_COLOR_TYPE_GRAY, 16, bytes, w * 2);
}

std::string png_library_version() { return PNG_LIBPNG_VER_STRING; }

}  // namespace deepdeblur::io
