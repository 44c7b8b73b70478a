#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mathrec/nn/graph.hpp"
#include "mathrec/nn/ops.hpp"

namespace mathrec::model {

using nn::Graph;
using nn::Matrix;
using nn::ParamStore;
using nn::Var;

/// `name.w` (in x out, Xavier) and `name.b` (1 x out, zeros).
template <typename Scalar>
void add_linear(ParamStore<Scalar>& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  store.add(name + ".w", nn::xavier_uniform<Scalar>(in, out, in, out, rng));
  store.add(name + ".b", Matrix<Scalar>::Zero(1, out));
}

template <typename Scalar>
Var<Scalar> linear(Graph<Scalar>& g, ParamStore<Scalar>& store, const std::string& name, const Var<Scalar>& x) {
  return nn::add_row(nn::matmul(x, g.parameter(store.get(name + ".w"))), g.parameter(store.get(name + ".b")));
}

template <typename Scalar>
void add_layer_norm(ParamStore<Scalar>& store, const std::string& name, int dim) {
  store.add(name + ".g", Matrix<Scalar>::Ones(1, dim));
  store.add(name + ".b", Matrix<Scalar>::Zero(1, dim));
}

template <typename Scalar>
Var<Scalar> layer_norm(Graph<Scalar>& g, ParamStore<Scalar>& store, const std::string& name, const Var<Scalar>& x) {
  return nn::layer_norm(x, g.parameter(store.get(name + ".g")), g.parameter(store.get(name + ".b")));
}

template <typename Scalar>
void add_feed_forward(ParamStore<Scalar>& store, const std::string& name, int dim, int hidden, std::mt19937_64& rng) {
  add_linear(store, name + ".in", dim, hidden, rng);
  add_linear(store, name + ".out", hidden, dim, rng);
}

template <typename Scalar>
Var<Scalar> feed_forward(Graph<Scalar>& g, ParamStore<Scalar>& store, const std::string& name,
                         const Var<Scalar>& x) {
  return linear(g, store, name + ".out", nn::relu(linear(g, store, name + ".in", x)));
}

template <typename Scalar>
void add_attention(ParamStore<Scalar>& store, const std::string& name, int dim, std::mt19937_64& rng) {
  for (const char* proj : {".q", ".k", ".v", ".o"}) add_linear(store, name + proj, dim, dim, rng);
}

/// Optional inputs to one multi-head attention call.
template <typename Scalar>
struct AttentionExtras {
  const Var<Scalar>* logit_bias = nullptr;  // (n_q x n_k), added to every head after scaling
  const nn::Mask* mask = nullptr;           // true entries are excluded from the softmax
  std::vector<Matrix<Scalar>>* maps = nullptr;  // receives one attention matrix per head
};

/// Scaled dot-product multi-head attention with learned Q/K/V/O projections.
template <typename Scalar>
Var<Scalar> multi_head_attention(Graph<Scalar>& g, ParamStore<Scalar>& store, const std::string& name,
                                 const Var<Scalar>& queries, const Var<Scalar>& keys_values, int heads,
                                 const AttentionExtras<Scalar>& extras = {}) {
  const Eigen::Index dim = queries.cols();
  const Eigen::Index head_dim = dim / heads;
  const auto q = linear(g, store, name + ".q", queries);
  const auto k = linear(g, store, name + ".k", keys_values);
  const auto v = linear(g, store, name + ".v", keys_values);
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  std::vector<Var<Scalar>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = nn::slice_cols(q, h * head_dim, head_dim);
    const auto kh = nn::slice_cols(k, h * head_dim, head_dim);
    const auto vh = nn::slice_cols(v, h * head_dim, head_dim);
    auto logits = nn::scale(nn::matmul(qh, nn::transpose(kh)), inv_sqrt);
    if (extras.logit_bias) logits = nn::add(logits, *extras.logit_bias);
    if (extras.mask) logits = nn::masked_fill(logits, *extras.mask, nn::masked_logit<Scalar>());
    const auto attn = nn::softmax_rows(logits);
    if (extras.maps) extras.maps->push_back(attn.value());
    outs.push_back(nn::matmul(attn, vh));
  }
  return linear(g, store, name + ".o", heads == 1 ? outs[0] : nn::concat_cols(outs));
}

}  // namespace mathrec::model
