#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Core>

namespace mathrec {

template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel 8-bit image, row-major, origin at the top-left.
struct GrayImage {
  Grid<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(Eigen::Index height, Eigen::Index width, std::uint8_t fill = 255);
  explicit GrayImage(Grid<std::uint8_t> p);

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
  std::uint8_t operator()(Eigen::Index r, Eigen::Index c) const { return pixels(r, c); }
  std::uint8_t& operator()(Eigen::Index r, Eigen::Index c) { return pixels(r, c); }

  bool operator==(const GrayImage& o) const {
    return height() == o.height() && width() == o.width() && (pixels == o.pixels).all();
  }
};

/// Foreground flags with the same shape as the source image.
struct BinaryMask {
  Grid<bool> bits;

  BinaryMask() = default;
  BinaryMask(Eigen::Index height, Eigen::Index width) : bits(Grid<bool>::Constant(height, width, false)) {}
  explicit BinaryMask(Grid<bool> b) : bits(std::move(b)) {}

  Eigen::Index height() const { return bits.rows(); }
  Eigen::Index width() const { return bits.cols(); }
  bool operator()(Eigen::Index r, Eigen::Index c) const { return bits(r, c); }
  bool& operator()(Eigen::Index r, Eigen::Index c) { return bits(r, c); }
  Eigen::Index count() const { return bits.count(); }

  bool operator==(const BinaryMask& o) const {
    return height() == o.height() && width() == o.width() && (bits == o.bits).all();
  }
};

/// Three 8-bit planes, used for attention overlays.
struct RgbImage {
  Grid<std::uint8_t> r, g, b;

  RgbImage(Eigen::Index height, Eigen::Index width);
  explicit RgbImage(const GrayImage& gray);
  Eigen::Index height() const { return r.rows(); }
  Eigen::Index width() const { return r.cols(); }
};

GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);

}  // namespace mathrec
