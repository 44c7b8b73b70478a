#include "mathrec/image.hpp"

#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "mathrec/error.hpp"

namespace mathrec {

GrayImage::GrayImage(Eigen::Index height, Eigen::Index width, std::uint8_t fill) {
  if (height < 1 || width < 1) throw InputError("image dimensions must be positive");
  pixels = Grid<std::uint8_t>::Constant(height, width, fill);
}

GrayImage::GrayImage(Grid<std::uint8_t> p) : pixels(std::move(p)) {
  if (pixels.rows() < 1 || pixels.cols() < 1) throw InputError("image dimensions must be positive");
}

RgbImage::RgbImage(Eigen::Index height, Eigen::Index width)
    : r(Grid<std::uint8_t>::Zero(height, width)),
      g(Grid<std::uint8_t>::Zero(height, width)),
      b(Grid<std::uint8_t>::Zero(height, width)) {}

RgbImage::RgbImage(const GrayImage& gray) : r(gray.pixels), g(gray.pixels), b(gray.pixels) {}

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

void write_rows(const std::filesystem::path& path, int width, int height, int color_type,
                const std::vector<png_bytep>& rows) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);

  // Normalize any input to 8-bit gray.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  Grid<std::uint8_t> pixels(height, width);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return GrayImage(std::move(pixels));
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<png_bytep> rows(img.height());
  auto* base = const_cast<std::uint8_t*>(img.pixels.data());
  for (Eigen::Index r = 0; r < img.height(); ++r) rows[r] = base + r * img.width();
  write_rows(path, static_cast<int>(img.width()), static_cast<int>(img.height()), PNG_COLOR_TYPE_GRAY, rows);
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  const auto h = img.height();
  const auto w = img.width();
  std::vector<std::uint8_t> interleaved(static_cast<std::size_t>(h * w * 3));
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      auto* px = &interleaved[static_cast<std::size_t>((y * w + x) * 3)];
      px[0] = img.r(y, x);
      px[1] = img.g(y, x);
      px[2] = img.b(y, x);
    }
  }
  std::vector<png_bytep> rows(h);
  for (Eigen::Index r = 0; r < h; ++r) rows[r] = interleaved.data() + r * w * 3;
  write_rows(path, static_cast<int>(w), static_cast<int>(h), PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace mathrec
