#include "mathrec/attention_export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mathrec/error.hpp"

namespace mathrec {

void write_matrix_text(const std::filesystem::path& path, const AttentionMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.8f", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

AttentionMatrix read_matrix_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    for (double v; ss >> v;) row.push_back(v);
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError(path.string() + ": ragged matrix");
    rows.push_back(std::move(row));
  }
  AttentionMatrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

RgbImage attention_overlay(const GrayImage& image, const std::vector<BoundingBox>& boxes,
                           const Eigen::RowVectorXd& weights, std::optional<std::size_t> query) {
  if (static_cast<std::size_t>(weights.size()) != boxes.size())
    throw ShapeError("attention_overlay: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(boxes.size()) + " boxes");
  RgbImage out(image);
  const double peak = weights.size() ? std::max(weights.maxCoeff(), 1e-12) : 1.0;
  auto inside = [&](int r, int c) { return r >= 0 && c >= 0 && r < out.height() && c < out.width(); };
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    const double a = std::clamp(weights(static_cast<Eigen::Index>(j)) / peak, 0.0, 1.0);
    const auto& b = boxes[j];
    for (int r = b.top; r <= b.bottom; ++r)
      for (int c = b.left; c <= b.right; ++c) {
        if (!inside(r, c)) continue;
        const double base = image(r, c);
        out.r(r, c) = static_cast<std::uint8_t>(base + a * (255.0 - base));
        out.g(r, c) = static_cast<std::uint8_t>(base * (1.0 - 0.8 * a));
        out.b(r, c) = static_cast<std::uint8_t>(base * (1.0 - 0.8 * a));
      }
  }
  if (query) {
    if (*query >= boxes.size()) throw InputError("query index out of range");
    const auto& b = boxes[*query];
    auto mark = [&](int r, int c) {
      if (!inside(r, c)) return;
      out.r(r, c) = 0;
      out.g(r, c) = 0;
      out.b(r, c) = 255;
    };
    for (int c = b.left - 1; c <= b.right + 1; ++c) {
      mark(b.top - 1, c);
      mark(b.bottom + 1, c);
    }
    for (int r = b.top - 1; r <= b.bottom + 1; ++r) {
      mark(r, b.left - 1);
      mark(r, b.right + 1);
    }
  }
  return out;
}

void export_encoder_attention(const std::filesystem::path& dir, const GrayImage& image,
                              const std::vector<BoundingBox>& boxes,
                              const std::vector<std::vector<AttentionMatrix>>& layer_head_maps, bool overlays) {
  std::filesystem::create_directories(dir);
  const auto n = static_cast<Eigen::Index>(boxes.size());
  for (std::size_t l = 0; l < layer_head_maps.size(); ++l)
    for (std::size_t h = 0; h < layer_head_maps[l].size(); ++h) {
      const auto& m = layer_head_maps[l][h];
      if (m.rows() != n || m.cols() != n) throw ShapeError("encoder attention map does not match the block count");
      const std::string stem = "layer" + std::to_string(l) + "_head" + std::to_string(h);
      write_matrix_text(dir / (stem + ".txt"), m);
      if (!overlays) continue;
      for (Eigen::Index i = 0; i < n; ++i)
        write_png(dir / (stem + "_query" + std::to_string(i) + ".png"),
                  attention_overlay(image, boxes, m.row(i), static_cast<std::size_t>(i)));
    }
}

void export_decoder_attention(const std::filesystem::path& dir, const GrayImage& image,
                              const std::vector<BoundingBox>& boxes, const std::vector<std::string>& tokens,
                              const AttentionMatrix& rows, bool overlays) {
  if (static_cast<std::size_t>(rows.rows()) != tokens.size() || static_cast<std::size_t>(rows.cols()) != boxes.size())
    throw ShapeError("decoder attention must have one row per token and one column per block");
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "decoder_cross.tsv");
  if (!out) throw IoError("cannot write " + (dir / "decoder_cross.tsv").string());
  char buf[32];
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out << t << '\t' << tokens[t];
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.8f", rows(static_cast<Eigen::Index>(t), j));
      out << '\t' << buf;
    }
    out << '\n';
    if (overlays)
      write_png(dir / ("decoder_step" + std::to_string(t) + ".png"),
                attention_overlay(image, boxes, rows.row(static_cast<Eigen::Index>(t))));
  }
}

}  // namespace mathrec
