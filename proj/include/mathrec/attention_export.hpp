#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mathrec/image.hpp"
#include "mathrec/segmentation.hpp"

namespace mathrec {

using AttentionMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Whitespace-separated grid, one matrix row per line, 8 decimals.
void write_matrix_text(const std::filesystem::path& path, const AttentionMatrix& m);
AttentionMatrix read_matrix_text(const std::filesystem::path& path);

/// Tints each box red in proportion to its weight (scaled by the row maximum)
/// and outlines the optional query box in blue.
RgbImage attention_overlay(const GrayImage& image, const std::vector<BoundingBox>& boxes,
                           const Eigen::RowVectorXd& weights, std::optional<std::size_t> query = std::nullopt);

/// Writes `layer{l}_head{h}.txt` for every map and, when `overlays` is set,
/// `layer{l}_head{h}_query{i}.png` for every query block.
void export_encoder_attention(const std::filesystem::path& dir, const GrayImage& image,
                              const std::vector<BoundingBox>& boxes,
                              const std::vector<std::vector<AttentionMatrix>>& layer_head_maps, bool overlays = true);

/// Writes `decoder_cross.tsv` (`step<TAB>token<TAB>weights...`) and one
/// `decoder_step{t}.png` overlay per emitted token.
void export_decoder_attention(const std::filesystem::path& dir, const GrayImage& image,
                              const std::vector<BoundingBox>& boxes, const std::vector<std::string>& tokens,
                              const AttentionMatrix& rows, bool overlays = true);

}  // namespace mathrec
