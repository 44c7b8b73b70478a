#include "mathrec/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <tuple>

#include "mathrec/error.hpp"

namespace mathrec {

void SegmentationConfig::validate() const {
  if (threshold < 0 || threshold > 255) throw InputError("threshold must be in [0,255]");
  if (connectivity != 4 && connectivity != 8) throw InputError("connectivity must be 4 or 8");
  if (min_component_area < 1) throw InputError("min_component_area must be >= 1");
}

BinaryMask binarize(const GrayImage& img, int threshold) {
  if (threshold < 0 || threshold > 255) throw InputError("threshold must be in [0,255]");
  return BinaryMask(img.pixels.cast<int>() < threshold);
}

namespace {

class DisjointSet {
 public:
  int make() {
    parent_.push_back(static_cast<int>(parent_.size()));
    return parent_.back();
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

ComponentLabels label_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw InputError("connectivity must be 4 or 8");
  const int h = static_cast<int>(mask.height());
  const int w = static_cast<int>(mask.width());
  Grid<int> provisional = Grid<int>::Constant(h, w, -1);
  DisjointSet sets;

  // First pass: provisional labels from already-visited neighbours.
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      int label = -1;
      auto visit = [&](int rr, int cc) {
        if (rr < 0 || cc < 0 || cc >= w) return;
        const int other = provisional(rr, cc);
        if (other < 0) return;
        if (label < 0)
          label = other;
        else
          sets.unite(label, other);
      };
      visit(r, c - 1);
      visit(r - 1, c);
      if (connectivity == 8) {
        visit(r - 1, c - 1);
        visit(r - 1, c + 1);
      }
      provisional(r, c) = label < 0 ? sets.make() : label;
    }
  }

  // Second pass: resolve equivalences, renumber in raster order.
  ComponentLabels out;
  out.labels = Grid<int>::Constant(h, w, -1);
  std::vector<int> dense;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (provisional(r, c) < 0) continue;
      const int root = sets.find(provisional(r, c));
      if (static_cast<std::size_t>(root) >= dense.size()) dense.resize(root + 1, -1);
      if (dense[root] < 0) {
        dense[root] = static_cast<int>(out.boxes.size());
        out.boxes.push_back({r, r, c, c});
        out.areas.push_back(0);
      }
      const int id = dense[root];
      out.labels(r, c) = id;
      auto& box = out.boxes[id];
      box.top = std::min(box.top, r);
      box.bottom = std::max(box.bottom, r);
      box.left = std::min(box.left, c);
      box.right = std::max(box.right, c);
      ++out.areas[id];
    }
  }
  return out;
}

std::vector<BoundingBox> connected_components(const BinaryMask& mask, const SegmentationConfig& cfg) {
  cfg.validate();
  ComponentLabels labels = label_components(mask, cfg.connectivity);
  std::vector<BoundingBox> boxes;
  for (std::size_t i = 0; i < labels.boxes.size(); ++i)
    if (labels.areas[i] >= cfg.min_component_area) boxes.push_back(labels.boxes[i]);
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    return std::tie(a.left, a.top, a.bottom, a.right) < std::tie(b.left, b.top, b.bottom, b.right);
  });
  return boxes;
}

namespace {

Patch resample_nearest(const GrayImage& img, const BoundingBox& box) {
  Patch patch;
  const int h = box.height();
  const int w = box.width();
  for (int i = 0; i < kPatchSize; ++i) {
    const int sr = box.top + (2 * i + 1) * h / (2 * kPatchSize);
    for (int j = 0; j < kPatchSize; ++j) {
      const int sc = box.left + (2 * j + 1) * w / (2 * kPatchSize);
      patch(i, j) = 1.0 - img(sr, sc) / 255.0;
    }
  }
  return patch;
}

Patch resample_bilinear(const GrayImage& img, const BoundingBox& box) {
  Patch patch;
  const int h = box.height();
  const int w = box.width();
  auto sample = [&](double y, double x) {
    y = std::clamp(y, 0.0, h - 1.0);
    x = std::clamp(x, 0.0, w - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    auto at = [&](int r, int c) { return 1.0 - img(box.top + r, box.left + c) / 255.0; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
  };
  for (int i = 0; i < kPatchSize; ++i)
    for (int j = 0; j < kPatchSize; ++j)
      patch(i, j) = sample((i + 0.5) * h / kPatchSize - 0.5, (j + 0.5) * w / kPatchSize - 0.5);
  return patch;
}

}  // namespace

std::vector<SymbolBlock> extract_blocks(const GrayImage& img, const std::vector<BoundingBox>& boxes,
                                        Resampling resampling) {
  std::vector<SymbolBlock> blocks;
  blocks.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    if (b.top < 0 || b.left < 0 || b.top > b.bottom || b.left > b.right || b.bottom >= img.height() ||
        b.right >= img.width())
      throw InputError("bounding box " + std::to_string(i) + " lies outside the image");
    SymbolBlock block;
    block.bbox = b;
    block.source_index = static_cast<int>(i);
    block.patch = resampling == Resampling::Nearest ? resample_nearest(img, b) : resample_bilinear(img, b);
    blocks.push_back(block);
  }
  return blocks;
}

std::vector<PositionVector> position_vectors(const std::vector<BoundingBox>& boxes) {
  if (boxes.empty()) throw InputError("position_vectors needs at least one box");
  int d_max = 0;
  int r_max = 0;
  for (const auto& b : boxes) {
    if (b.top < 0 || b.bottom < 0 || b.left < 0 || b.right < 0)
      throw InputError("box coordinates must be non-negative");
    d_max = std::max(d_max, b.bottom);
    r_max = std::max(r_max, b.right);
  }
  if (d_max == 0 || r_max == 0) throw DegenerateGeometryError("d_max and r_max must be positive");
  const double d = d_max;
  const double r = r_max;
  std::vector<PositionVector> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({b.top / d, b.bottom / d, b.left / r, b.right / r, d / r});
  return out;
}

std::vector<BoundingBox> Segmentation::boxes() const {
  std::vector<BoundingBox> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.bbox);
  return out;
}

Segmentation segment(const GrayImage& img, const SegmentationConfig& cfg) {
  cfg.validate();
  const auto boxes = connected_components(binarize(img, cfg.threshold), cfg);
  if (boxes.empty()) throw EmptyExpressionError("no ink components at threshold " + std::to_string(cfg.threshold));
  return {extract_blocks(img, boxes, cfg.resampling), position_vectors(boxes)};
}

void write_segmentation_debug(const std::filesystem::path& dir, const Segmentation& seg) {
  std::filesystem::create_directories(dir);
  std::ofstream sidecar(dir / "positions.txt");
  if (!sidecar) throw IoError("cannot write " + (dir / "positions.txt").string());
  char line[256];
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const auto& block = seg.blocks[i];
    GrayImage out(kPatchSize, kPatchSize);
    out.pixels = (255.0 * (1.0 - block.patch.array())).round().cast<std::uint8_t>();
    char name[32];
    std::snprintf(name, sizeof(name), "block_%03zu.png", i);
    write_png(dir / name, out);

    const auto& b = block.bbox;
    const auto& p = seg.positions[i];
    std::snprintf(line, sizeof(line), "%zu %d %d %d %d %.6f %.6f %.6f %.6f %.6f\n", i, b.top, b.bottom, b.left,
                  b.right, p.top, p.bottom, p.left, p.right, p.aspect);
    sidecar << line;
  }
}

}  // namespace mathrec
