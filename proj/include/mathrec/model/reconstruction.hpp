#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mathrec/model/config.hpp"
#include "mathrec/model/layers.hpp"
#include "mathrec/segmentation.hpp"

namespace mathrec::model {

// ---------------------------------------------------------------------------
// Single-head attention scores on plain matrices. These are the reference
// forms used for analysis; the trainable stack below goes through the tape.

/// softmax_j(e_i . e_j / sqrt(d_e)).
template <typename Scalar>
Matrix<Scalar> self_attention_scores(const Matrix<Scalar>& embeddings) {
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(embeddings.cols()));
  return nn::softmax_rows_value<Scalar>((embeddings * embeddings.transpose()) * inv_sqrt);
}

/// table(i, j) = v_a . tanh([p_i; p_j]^T W_a) with W_a of shape (2d x d), v_a (d x 1).
template <typename Scalar>
Matrix<Scalar> position_scores(const Matrix<Scalar>& positions, const Matrix<Scalar>& w_a, const Matrix<Scalar>& v_a) {
  const Eigen::Index n = positions.rows();
  const Eigen::Index d = positions.cols();
  if (w_a.rows() != 2 * d || v_a.rows() != w_a.cols() || v_a.cols() != 1)
    throw ShapeError("position_scores: W_a must be (2d x k) and v_a (k x 1)");
  const Matrix<Scalar> top = positions * w_a.topRows(d);
  const Matrix<Scalar> bottom = positions * w_a.bottomRows(d);
  Matrix<Scalar> table(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      table(i, j) = ((top.row(i) + bottom.row(j)).array().tanh().matrix() * v_a)(0, 0);
  return table;
}

/// softmax_j(e_i . e_j / sqrt(d_e) + table(i, j)).
template <typename Scalar>
Matrix<Scalar> pc_attention_scores(const Matrix<Scalar>& embeddings, const Matrix<Scalar>& table) {
  const Eigen::Index n = embeddings.rows();
  if (table.rows() != n || table.cols() != n)
    throw ShapeError("pc_attention_scores: table " + nn::shape_string(table.rows(), table.cols()) +
                     " does not match " + std::to_string(n) + " embeddings");
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(embeddings.cols()));
  return nn::softmax_rows_value<Scalar>((embeddings * embeddings.transpose()) * inv_sqrt + table);
}

// ---------------------------------------------------------------------------
// Trainable reconstruction stack.

template <typename Scalar>
struct EncoderTrace {
  bool keep_maps = true;
  std::vector<std::vector<Matrix<Scalar>>> layer_maps;  // [layer][head] -> n x n
  Matrix<Scalar> position_table;                        // PC mode only
  int position_score_calls = 0;
};

template <typename Scalar>
void add_reconstruction_encoder(ParamStore<Scalar>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int d = cfg.embed_dim;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    add_layer_norm(store, p + ".ln1", d);
    add_attention(store, p + ".attn", d, rng);
    add_layer_norm(store, p + ".ln2", d);
    add_feed_forward(store, p + ".ffn", d, cfg.ffn_multiplier * d, rng);
  }
  add_layer_norm(store, "enc.ln_final", d);
  if (cfg.attention == AttentionMode::PCAttention) {
    store.add("enc.pc.wa", nn::xavier_uniform<Scalar>(2 * d, d, 2.0 * d, d, rng));
    store.add("enc.pc.va", nn::xavier_uniform<Scalar>(d, 1, d, 1, rng));
  }
}

/// Differentiable position score table over every ordered pair of blocks.
template <typename Scalar>
Var<Scalar> position_scores(Graph<Scalar>& g, ParamStore<Scalar>& store, const Var<Scalar>& positions,
                            EncoderTrace<Scalar>* trace = nullptr) {
  const auto n = static_cast<int>(positions.rows());
  std::vector<int> first(static_cast<std::size_t>(n) * n);
  std::vector<int> second(first.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      first[static_cast<std::size_t>(i * n + j)] = i;
      second[static_cast<std::size_t>(i * n + j)] = j;
    }
  const auto pairs = nn::concat_cols<Scalar>({nn::embedding_lookup(positions, first), nn::embedding_lookup(positions, second)});
  const auto hidden = nn::tanh(nn::matmul(pairs, g.parameter(store.get("enc.pc.wa"))));
  const auto table = nn::reshape(nn::matmul(hidden, g.parameter(store.get("enc.pc.va"))), n, n);
  if (trace) {
    ++trace->position_score_calls;
    trace->position_table = table.value();
  }
  return table;
}

/// Pre-norm transformer encoder over the unordered block set. In PC mode the
/// position table is evaluated once and added to every layer and head.
template <typename Scalar>
Var<Scalar> encode(Graph<Scalar>& g, ParamStore<Scalar>& store, const ModelConfig& cfg, const Var<Scalar>& embeddings,
                   const Var<Scalar>& positions, EncoderTrace<Scalar>* trace = nullptr) {
  if (embeddings.rows() != positions.rows())
    throw PairingError("encode: embeddings and positions differ in count");
  if (embeddings.rows() < 1) throw ShapeError("encode: empty block set");
  if (!cfg.use_reconstruction) return embeddings;

  Var<Scalar> table;
  if (cfg.attention == AttentionMode::PCAttention) table = position_scores(g, store, positions, trace);

  Var<Scalar> x = embeddings;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    AttentionExtras<Scalar> extras;
    if (table.valid()) extras.logit_bias = &table;
    std::vector<Matrix<Scalar>> maps;
    if (trace && trace->keep_maps) extras.maps = &maps;
    const auto h = layer_norm(g, store, p + ".ln1", x);
    x = nn::add(x, multi_head_attention(g, store, p + ".attn", h, h, cfg.heads, extras));
    x = nn::add(x, feed_forward(g, store, p + ".ffn", layer_norm(g, store, p + ".ln2", x)));
    if (trace && trace->keep_maps) trace->layer_maps.push_back(std::move(maps));
  }
  return layer_norm(g, store, "enc.ln_final", x);
}

/// Average attention mass a block assigns to its ceil(k% * n) nearest other
/// blocks (bounding-box centre distance, ties by index), over blocks and heads.
inline double cumulative_nearest_attention(const std::vector<Matrix<double>>& head_maps,
                                           const std::vector<BoundingBox>& boxes, double k_percent) {
  const auto n = static_cast<Eigen::Index>(boxes.size());
  if (n < 2) throw UndefinedMetricError("cumulative attention needs at least two symbols");
  if (!(k_percent > 0 && k_percent <= 100)) throw InputError("k_percent must lie in (0, 100]");
  if (head_maps.empty()) throw InputError("no attention maps");
  for (const auto& m : head_maps)
    if (m.rows() != n || m.cols() != n) throw ShapeError("attention map does not match the box count");

  auto count = static_cast<Eigen::Index>(std::ceil(k_percent * static_cast<double>(n) / 100.0 - 1e-9));
  count = std::clamp<Eigen::Index>(count, 1, n - 1);

  long double total = 0;
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto dist2 = [&](Eigen::Index j) {
      const double dr = boxes[i].center_row() - boxes[j].center_row();
      const double dc = boxes[i].center_col() - boxes[j].center_col();
      return dr * dr + dc * dc;
    };
    order.erase(order.begin() + i);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return dist2(a) < dist2(b); });
    for (const auto& m : head_maps)
      for (Eigen::Index r = 0; r < count; ++r) total += m(i, order[static_cast<std::size_t>(r)]);
  }
  return static_cast<double>(total / static_cast<long double>(n * static_cast<Eigen::Index>(head_maps.size())));
}

}  // namespace mathrec::model
