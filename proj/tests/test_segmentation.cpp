#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mathrec/error.hpp"
#include "mathrec/segmentation.hpp"
#include "oracles.hpp"

using namespace mathrec;

namespace {

GrayImage blank(int h, int w) { return GrayImage(h, w, 255); }

void paint(GrayImage& img, int top, int left, int h, int w, std::uint8_t v = 0) {
  for (int r = top; r < top + h; ++r)
    for (int c = left; c < left + w; ++c) img(r, c) = v;
}

}  // namespace

TEST(Binarize, BlankAndFullImages) {
  EXPECT_EQ(binarize(blank(4, 5), 160).count(), 0);
  EXPECT_EQ(binarize(GrayImage(4, 5, 0), 160).count(), 20);
}

TEST(Binarize, ThresholdIsStrict) {
  GrayImage img = blank(1, 2);
  img(0, 0) = 159;
  img(0, 1) = 160;
  const auto m = binarize(img, 160);
  EXPECT_TRUE(m(0, 0));
  EXPECT_FALSE(m(0, 1));
}

TEST(GrayImage, RejectsEmptyDimensions) { EXPECT_THROW(GrayImage(0, 3), InputError); }

TEST(SegmentationConfig, Validates) {
  SegmentationConfig c;
  c.threshold = 256;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.connectivity = 6;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.min_component_area = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(ConnectedComponents, EmptyMask) {
  EXPECT_TRUE(connected_components(BinaryMask(6, 6), SegmentationConfig{}).empty());
}

TEST(ConnectedComponents, TwoSquares) {
  GrayImage img = blank(10, 12);
  paint(img, 1, 1, 3, 3);
  paint(img, 5, 7, 3, 3);
  const auto boxes = connected_components(binarize(img, 160), SegmentationConfig{});
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0], (BoundingBox{1, 3, 1, 3}));
  EXPECT_EQ(boxes[1], (BoundingBox{5, 7, 7, 9}));
}

TEST(ConnectedComponents, DiagonalTouchDependsOnConnectivity) {
  BinaryMask m(4, 4);
  m(0, 0) = m(1, 1) = m(2, 2) = true;
  SegmentationConfig c;
  c.min_component_area = 1;
  c.connectivity = 8;
  EXPECT_EQ(connected_components(m, c).size(), 1u);
  c.connectivity = 4;
  EXPECT_EQ(connected_components(m, c).size(), 3u);
}

TEST(ConnectedComponents, MinimumAreaDropsSpecks) {
  BinaryMask m(5, 5);
  m(0, 0) = true;
  m(3, 3) = m(3, 4) = true;
  SegmentationConfig c;
  EXPECT_EQ(connected_components(m, c).size(), 1u);
  c.min_component_area = 1;
  EXPECT_EQ(connected_components(m, c).size(), 2u);
}

TEST(ConnectedComponents, SortedByLeftThenTop) {
  BinaryMask m(10, 10);
  m(6, 2) = m(6, 3) = true;
  m(1, 2) = m(1, 3) = true;
  m(3, 0) = m(4, 0) = true;
  const auto boxes = connected_components(m, SegmentationConfig{});
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_EQ(boxes[0].left, 0);
  EXPECT_EQ(boxes[1].top, 1);
  EXPECT_EQ(boxes[2].top, 6);
}

// Two glyph-like blobs that touch only at a mid-gray bridge: whether they
// merge depends on the threshold, and the flood fill decides the truth.
TEST(ConnectedComponents, TouchingPairAgainstFloodFill) {
  GrayImage img = blank(12, 16);
  paint(img, 2, 2, 8, 5);
  paint(img, 2, 9, 8, 5);
  paint(img, 5, 7, 2, 2, 170);
  for (int threshold : {160, 180}) {
    const auto mask = binarize(img, threshold);
    SegmentationConfig c;
    c.min_component_area = 1;
    const auto oracle = oracle::flood_fill_components(mask, 8);
    EXPECT_EQ(connected_components(mask, c).size(), oracle.size()) << threshold;
  }
  EXPECT_EQ(connected_components(binarize(img, 160), {}).size(), 2u);
  EXPECT_EQ(connected_components(binarize(img, 180), {}).size(), 1u);
}

TEST(ConnectedComponents, MatchesFloodFillOnRandomMasks) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 20), w = 1 + static_cast<int>(rng() % 20);
    const double density = 0.2 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    const BinaryMask m = oracle::random_mask(h, w, density, rng);
    for (int conn : {4, 8}) {
      const auto labels = label_components(m, conn);
      const auto expected = oracle::flood_fill_components(m, conn);
      ASSERT_EQ(labels.boxes.size(), expected.size());
      EXPECT_TRUE(oracle::same_partition(labels.labels, expected, m));
    }
  }
}

TEST(ExtractBlocks, IdentityFor30x30Crop) {
  std::mt19937_64 rng(3);
  GrayImage img(40, 40);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = static_cast<std::uint8_t>(rng() % 256);
  const BoundingBox box{5, 34, 7, 36};
  const auto blocks = extract_blocks(img, {box});
  ASSERT_EQ(blocks.size(), 1u);
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 30; ++c) EXPECT_DOUBLE_EQ(blocks[0].patch(r, c), 1.0 - img(5 + r, 7 + c) / 255.0);
}

TEST(ExtractBlocks, ConstantCropStaysConstant) {
  GrayImage img(60, 60, 51);
  for (auto mode : {Resampling::Nearest, Resampling::Bilinear}) {
    const auto blocks = extract_blocks(img, {BoundingBox{0, 59, 0, 59}}, mode);
    EXPECT_TRUE((blocks[0].patch.array() == 1.0 - 51 / 255.0).all());
  }
}

TEST(ExtractBlocks, NearestMatchesIndexMappingOracle) {
  GrayImage img = blank(50, 50);
  for (int r = 10; r < 25; ++r)
    for (int c = 2; c < 47; ++c) img(r, c) = static_cast<std::uint8_t>((r * 7 + c * 13) % 256);
  paint(img, 10, 30, 15, 3);  // vertical bar
  const BoundingBox box{10, 24, 2, 46};  // 15 x 45
  const auto blocks = extract_blocks(img, {box});
  const auto expected = oracle::nearest_resample(img, box, 30);
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 30; ++c) ASSERT_DOUBLE_EQ(blocks[0].patch(r, c), expected(r, c)) << r << "," << c;
}

TEST(ExtractBlocks, OutOfBoundsIsAnInputError) {
  EXPECT_THROW(extract_blocks(blank(10, 10), {BoundingBox{0, 10, 0, 3}}), InputError);
  EXPECT_THROW(extract_blocks(blank(10, 10), {BoundingBox{-1, 3, 0, 3}}), InputError);
  EXPECT_THROW(extract_blocks(blank(10, 10), {BoundingBox{5, 3, 0, 3}}), InputError);
}

TEST(PositionVectors, SingleBox) {
  const auto p = position_vectors({BoundingBox{0, 50, 0, 100}});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_DOUBLE_EQ(p[0].top, 0);
  EXPECT_DOUBLE_EQ(p[0].bottom, 1);
  EXPECT_DOUBLE_EQ(p[0].left, 0);
  EXPECT_DOUBLE_EQ(p[0].right, 1);
  EXPECT_DOUBLE_EQ(p[0].aspect, 0.5);
}

TEST(PositionVectors, HandEvaluatedPair) {
  const auto p = position_vectors({BoundingBox{10, 40, 20, 60}, BoundingBox{0, 50, 0, 100}});
  EXPECT_DOUBLE_EQ(p[0].top, 0.2);
  EXPECT_DOUBLE_EQ(p[0].bottom, 0.8);
  EXPECT_DOUBLE_EQ(p[0].left, 0.2);
  EXPECT_DOUBLE_EQ(p[0].right, 0.6);
  EXPECT_DOUBLE_EQ(p[0].aspect, 0.5);
}

TEST(PositionVectors, DegenerateGeometry) {
  EXPECT_THROW(position_vectors({BoundingBox{0, 0, 0, 4}}), DegenerateGeometryError);
  EXPECT_THROW(position_vectors({BoundingBox{0, 4, 0, 0}}), DegenerateGeometryError);
  EXPECT_THROW(position_vectors({}), InputError);
}

TEST(PositionVectors, AnchoredToImageOrigin) {
  const auto a = position_vectors({BoundingBox{0, 10, 0, 10}, BoundingBox{2, 4, 2, 4}});
  const auto b = position_vectors({BoundingBox{5, 15, 0, 10}, BoundingBox{7, 9, 2, 4}});
  EXPECT_NE(a[1].top, b[1].top);
  EXPECT_DOUBLE_EQ(a[1].left, b[1].left);
}

TEST(Segment, BlankImageIsEmptyExpression) { EXPECT_THROW(segment(blank(20, 20), {}), EmptyExpressionError); }

TEST(Segment, PairsBlocksWithPositions) {
  GrayImage img = blank(20, 30);
  paint(img, 2, 20, 10, 3);
  paint(img, 5, 2, 3, 8);
  const auto seg = segment(img, {});
  ASSERT_EQ(seg.size(), 2u);
  ASSERT_EQ(seg.positions.size(), 2u);
  EXPECT_EQ(seg.blocks[0].bbox.left, 2);
  EXPECT_EQ(seg.blocks[1].bbox.left, 20);
  EXPECT_EQ(seg.blocks[0].source_index, 0);
  EXPECT_EQ(seg.blocks[1].source_index, 1);
  EXPECT_DOUBLE_EQ(seg.positions[0].aspect, seg.positions[1].aspect);
}

TEST(Segment, DebugOutputFormat) {
  GrayImage img = blank(20, 30);
  paint(img, 2, 20, 10, 3);
  const auto dir = std::filesystem::temp_directory_path() / "mathrec_seg_debug";
  std::filesystem::remove_all(dir);
  write_segmentation_debug(dir, segment(img, {}));
  EXPECT_TRUE(std::filesystem::exists(dir / "block_000.png"));
  std::ifstream in(dir / "positions.txt");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "0 2 11 20 22 0.181818 1.000000 0.909091 1.000000 0.500000");
}
