#pragma once

#include <string>
#include <vector>

#include "mathrec/model/config.hpp"
#include "mathrec/model/layers.hpp"
#include "mathrec/segmentation.hpp"

namespace mathrec::model {

inline constexpr int kPatchPixels = kPatchSize * kPatchSize;
inline constexpr int kPositionArity = 5;

/// Six 3x3 convolutions (ReLU, 2x max-pool after the 2nd, 4th and 6th), then a
/// fully connected projection to embed_dim: 30x30 -> 15x15 -> 7x7 -> 3x3.
template <typename Scalar>
void add_symbol_encoder(ParamStore<Scalar>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  int in = 1;
  for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const int out = cfg.cnn_channels[i];
    const std::string name = "cnn.conv" + std::to_string(i);
    store.add(name + ".w", nn::xavier_uniform<Scalar>(out, in * 9, in * 9.0, out * 9.0, rng));
    store.add(name + ".b", Matrix<Scalar>::Zero(1, out));
    in = out;
  }
  add_linear(store, "cnn.fc", in * 3 * 3, cfg.embed_dim, rng);
}

template <typename Scalar>
Var<Scalar> encode_blocks(Graph<Scalar>& g, ParamStore<Scalar>& store, const ModelConfig& cfg,
                          const Matrix<Scalar>& patches) {
  if (patches.cols() != kPatchPixels)
    throw ShapeError("encode_blocks: expected 30x30 patches (900 columns), got " +
                     nn::shape_string(patches.rows(), patches.cols()));
  Var<Scalar> x = g.constant(patches);
  nn::MapShape shape{1, kPatchSize, kPatchSize};
  for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const std::string name = "cnn.conv" + std::to_string(i);
    x = nn::relu(nn::conv2d(x, g.parameter(store.get(name + ".w")), g.parameter(store.get(name + ".b")), shape));
    shape.channels = cfg.cnn_channels[i];
    if (i % 2 == 1) {
      x = nn::max_pool2d(x, shape, 2);
      shape.height /= 2;
      shape.width /= 2;
    }
  }
  return linear(g, store, "cnn.fc", x);
}

/// Three fully connected layers 5 -> h0 -> h1 -> embed_dim, tanh on the hidden layers.
template <typename Scalar>
void add_position_encoder(ParamStore<Scalar>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  add_linear(store, "pos.fc0", kPositionArity, cfg.position_hidden[0], rng);
  add_linear(store, "pos.fc1", cfg.position_hidden[0], cfg.position_hidden[1], rng);
  add_linear(store, "pos.fc2", cfg.position_hidden[1], cfg.embed_dim, rng);
}

template <typename Scalar>
Var<Scalar> encode_positions(Graph<Scalar>& g, ParamStore<Scalar>& store, const Matrix<Scalar>& positions) {
  if (positions.cols() != kPositionArity)
    throw ShapeError("encode_positions: expected 5-entry position vectors, got " +
                     nn::shape_string(positions.rows(), positions.cols()));
  auto h = nn::tanh(linear(g, store, "pos.fc0", g.constant(positions)));
  h = nn::tanh(linear(g, store, "pos.fc1", h));
  return linear(g, store, "pos.fc2", h);
}

/// e_i = s'_i + p'_i.
template <typename Scalar>
Var<Scalar> combine(const Var<Scalar>& symbols, const Var<Scalar>& positions) {
  if (symbols.rows() != positions.rows() || symbols.cols() != positions.cols())
    throw PairingError("combine: " + nn::shape_string(symbols.rows(), symbols.cols()) + " vs " +
                       nn::shape_string(positions.rows(), positions.cols()));
  return nn::add(symbols, positions);
}

template <typename Scalar>
Matrix<Scalar> patch_matrix(const std::vector<SymbolBlock>& blocks) {
  Matrix<Scalar> m(static_cast<Eigen::Index>(blocks.size()), kPatchPixels);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::Matrix<double, 1, kPatchPixels>>(blocks[i].patch.data()).template cast<Scalar>();
  return m;
}

template <typename Scalar>
Matrix<Scalar> position_matrix(const std::vector<PositionVector>& positions) {
  Matrix<Scalar> m(static_cast<Eigen::Index>(positions.size()), kPositionArity);
  for (std::size_t i = 0; i < positions.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = positions[i].row().template cast<Scalar>();
  return m;
}

}  // namespace mathrec::model
