#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "mathrec/image.hpp"

namespace mathrec {

inline constexpr int kPatchSize = 30;
using Patch = Eigen::Matrix<double, kPatchSize, kPatchSize, Eigen::RowMajor>;

/// Inclusive pixel bounds measured from the image's top-left corner.
struct BoundingBox {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  int height() const { return bottom - top + 1; }
  int width() const { return right - left + 1; }
  double center_row() const { return 0.5 * (top + bottom); }
  double center_col() const { return 0.5 * (left + right); }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct SymbolBlock {
  Patch patch;  // ink-positive: 1 - intensity / 255
  BoundingBox bbox;
  int source_index = 0;
};

/// (top/d_max, bottom/d_max, left/r_max, right/r_max, d_max/r_max).
struct PositionVector {
  double top = 0;
  double bottom = 0;
  double left = 0;
  double right = 0;
  double aspect = 0;

  Eigen::Matrix<double, 1, 5> row() const { return {top, bottom, left, right, aspect}; }
};

enum class Resampling { Nearest, Bilinear };

struct SegmentationConfig {
  int threshold = 160;
  int connectivity = 8;
  int min_component_area = 2;
  Resampling resampling = Resampling::Nearest;

  void validate() const;
};

/// Foreground iff intensity < threshold.
BinaryMask binarize(const GrayImage& img, int threshold);

struct ComponentLabels {
  Grid<int> labels;  // -1 for background, otherwise component id
  std::vector<BoundingBox> boxes;
  std::vector<int> areas;
};

/// Union-find two-pass labeling. Component ids follow raster order of each
/// component's first pixel.
ComponentLabels label_components(const BinaryMask& mask, int connectivity);

/// Boxes of components with area >= min_component_area, sorted by (left, top).
std::vector<BoundingBox> connected_components(const BinaryMask& mask, const SegmentationConfig& cfg);

std::vector<SymbolBlock> extract_blocks(const GrayImage& img, const std::vector<BoundingBox>& boxes,
                                        Resampling resampling = Resampling::Nearest);

std::vector<PositionVector> position_vectors(const std::vector<BoundingBox>& boxes);

struct Segmentation {
  std::vector<SymbolBlock> blocks;
  std::vector<PositionVector> positions;

  std::size_t size() const { return blocks.size(); }
  std::vector<BoundingBox> boxes() const;
};

Segmentation segment(const GrayImage& img, const SegmentationConfig& cfg);

/// Writes block_NNN.png per block plus positions.txt
/// (`index top bottom left right t d l r ro`, 6 decimals).
void write_segmentation_debug(const std::filesystem::path& dir, const Segmentation& seg);

}  // namespace mathrec
