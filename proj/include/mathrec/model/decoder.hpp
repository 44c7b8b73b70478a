#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mathrec/model/config.hpp"
#include "mathrec/model/layers.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec::model {

template <typename Scalar>
struct DecoderTrace {
  std::vector<Matrix<Scalar>> last_cross_attention;  // one (T x n) map per head
};

template <typename Scalar>
void add_transcribing_decoder(ParamStore<Scalar>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int d = cfg.embed_dim;
  store.add("dec.embed", nn::xavier_uniform<Scalar>(cfg.vocab_size, d, cfg.vocab_size, d, rng));
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    add_layer_norm(store, p + ".ln1", d);
    add_attention(store, p + ".self", d, rng);
    add_layer_norm(store, p + ".ln2", d);
    add_attention(store, p + ".cross", d, rng);
    add_layer_norm(store, p + ".ln3", d);
    add_feed_forward(store, p + ".ffn", d, cfg.ffn_multiplier * d, rng);
  }
  add_layer_norm(store, "dec.ln_final", d);
  store.add("dec.w_out", nn::xavier_uniform<Scalar>(d, cfg.vocab_size, d, cfg.vocab_size, rng));
}

/// Sinusoidal encoding of output positions 0..length-1.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix<Scalar> pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos)
    for (Eigen::Index i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = static_cast<Scalar>(std::sin(angle));
      if (i + 1 < dim) pe(pos, i + 1) = static_cast<Scalar>(std::cos(angle));
    }
  return pe;
}

/// True strictly above the diagonal: step t sees inputs 0..t.
inline nn::Mask causal_mask(Eigen::Index length) {
  nn::Mask m(length, length);
  for (Eigen::Index i = 0; i < length; ++i)
    for (Eigen::Index j = 0; j < length; ++j) m(i, j) = j > i;
  return m;
}

/// Teacher-forced logits: row t scores the token that follows inputs[0..t].
template <typename Scalar>
Var<Scalar> decoder_logits(Graph<Scalar>& g, ParamStore<Scalar>& store, const ModelConfig& cfg,
                           const Var<Scalar>& encoded, const std::vector<TokenId>& inputs,
                           DecoderTrace<Scalar>* trace = nullptr) {
  if (inputs.empty()) throw ContractError("decoder needs a non-empty prefix");
  if (encoded.rows() < 1) throw ContractError("decoder needs at least one encoded block");
  const auto length = static_cast<Eigen::Index>(inputs.size());
  Var<Scalar> x = nn::add(nn::embedding_lookup(g.parameter(store.get("dec.embed")), inputs),
                          g.constant(sinusoidal_positions<Scalar>(length, cfg.embed_dim)));
  const nn::Mask mask = causal_mask(length);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    AttentionExtras<Scalar> self_extras;
    self_extras.mask = &mask;
    auto h = layer_norm(g, store, p + ".ln1", x);
    x = nn::add(x, multi_head_attention(g, store, p + ".self", h, h, cfg.heads, self_extras));

    AttentionExtras<Scalar> cross_extras;
    std::vector<Matrix<Scalar>> maps;
    const bool last = l + 1 == cfg.decoder_layers;
    if (trace && last) cross_extras.maps = &maps;
    h = layer_norm(g, store, p + ".ln2", x);
    x = nn::add(x, multi_head_attention(g, store, p + ".cross", h, encoded, cfg.heads, cross_extras));
    if (trace && last) trace->last_cross_attention = std::move(maps);

    x = nn::add(x, feed_forward(g, store, p + ".ffn", layer_norm(g, store, p + ".ln3", x)));
  }
  const auto out = layer_norm(g, store, "dec.ln_final", x);
  return nn::matmul(out, g.parameter(store.get("dec.w_out")));
}

/// Sum over target steps of -log p(y_t | y_<t, R). `target` is BOS ... EOS;
/// PAD positions are excluded.
template <typename Scalar>
Var<Scalar> sequence_nll(Graph<Scalar>& g, ParamStore<Scalar>& store, const ModelConfig& cfg,
                         const Var<Scalar>& encoded, const std::vector<TokenId>& target) {
  if (target.size() < 2 || target.front() != Vocabulary::kBosId)
    throw ContractError("target must start with BOS and contain at least one step");
  if (std::find(target.begin(), target.end(), Vocabulary::kEosId) == target.end())
    throw ContractError("target has no EOS");
  const std::vector<TokenId> inputs(target.begin(), target.end() - 1);
  std::vector<int> labels(target.begin() + 1, target.end());
  for (auto& y : labels)
    if (y == Vocabulary::kPadId) y = -1;
  return nn::cross_entropy(decoder_logits(g, store, cfg, encoded, inputs), labels);
}

}  // namespace mathrec::model
