#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mathrec/model/config.hpp"
#include "mathrec/model/decoder.hpp"
#include "mathrec/model/reconstruction.hpp"
#include "mathrec/model/symbol_encoder.hpp"
#include "mathrec/segmentation.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec::model {

/// One image as the network sees it.
template <typename Scalar>
struct ModelInput {
  Matrix<Scalar> patches;    // n x 900
  Matrix<Scalar> positions;  // n x 5
  std::vector<BoundingBox> boxes;

  Eigen::Index size() const { return patches.rows(); }
};

template <typename Scalar>
ModelInput<Scalar> make_input(const Segmentation& seg) {
  return {patch_matrix<Scalar>(seg.blocks), position_matrix<Scalar>(seg.positions), seg.boxes()};
}

enum class DecodeStrategy { Greedy, Beam };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::Greedy;
  int beam_width = 4;
  int max_length = 64;  // decoding steps, EOS included
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // BOS/EOS excluded
  double log_prob = 0;
  bool truncated = false;
};

template <typename Scalar>
class Model {
 public:
  struct Embedding {
    Var<Scalar> symbols;
    Var<Scalar> positions;
    Var<Scalar> combined;
  };

  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    add_symbol_encoder(params_, cfg_, rng);
    if (cfg_.use_positions) add_position_encoder(params_, cfg_, rng);
    if (cfg_.use_reconstruction) add_reconstruction_encoder(params_, cfg_, rng);
    add_transcribing_decoder(params_, cfg_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  Embedding embed(Graph<Scalar>& g, const ModelInput<Scalar>& in) {
    Embedding e;
    e.symbols = encode_blocks(g, params_, cfg_, in.patches);
    e.positions = cfg_.use_positions ? encode_positions(g, params_, in.positions)
                                     : g.constant(Matrix<Scalar>::Zero(in.size(), cfg_.embed_dim));
    e.combined = combine(e.symbols, e.positions);
    return e;
  }

  Var<Scalar> encode(Graph<Scalar>& g, const ModelInput<Scalar>& in, EncoderTrace<Scalar>* trace = nullptr) {
    if (in.size() < 1) throw ContractError("model input has no blocks");
    const auto e = embed(g, in);
    return model::encode(g, params_, cfg_, e.combined, e.positions, trace);
  }

  Var<Scalar> loss(Graph<Scalar>& g, const ModelInput<Scalar>& in, const std::vector<TokenId>& target) {
    return sequence_nll(g, params_, cfg_, encode(g, in), target);
  }

  /// Encoded block set R without gradient tracking.
  Matrix<Scalar> encoded(const ModelInput<Scalar>& in, EncoderTrace<Scalar>* trace = nullptr) {
    Graph<Scalar> g(false);
    return encode(g, in, trace).value();
  }

  Eigen::VectorXd next_token_distribution(const Matrix<Scalar>& encoded, const std::vector<TokenId>& prefix) {
    if (prefix.empty() || prefix.front() != Vocabulary::kBosId)
      throw ContractError("prefix must begin with BOS");
    Graph<Scalar> g(false);
    const auto logits = decoder_logits(g, params_, cfg_, g.constant(encoded), prefix);
    const Matrix<Scalar> last = logits.value().bottomRows(1);
    return nn::softmax_rows_value<Scalar>(last).row(0).transpose().template cast<double>();
  }

  DecodeResult decode(const Matrix<Scalar>& encoded, const DecodeConfig& dc) {
    if (dc.max_length < 1) throw InputError("max_length must be >= 1");
    if (dc.beam_width < 1) throw InputError("beam width must be >= 1");
    return dc.strategy == DecodeStrategy::Greedy ? greedy(encoded, dc.max_length)
                                                 : beam(encoded, dc.beam_width, dc.max_length);
  }

  DecodeResult decode(const ModelInput<Scalar>& in, const DecodeConfig& dc) { return decode(encoded(in), dc); }

  /// Last-layer cross-attention for each emitted token (EOS included when
  /// present), averaged over heads: an (emitted x n) matrix.
  Matrix<double> decoder_attention(const Matrix<Scalar>& encoded, const std::vector<TokenId>& emitted) {
    std::vector<TokenId> inputs{Vocabulary::kBosId};
    if (!emitted.empty()) inputs.insert(inputs.end(), emitted.begin(), emitted.end() - 1);
    Graph<Scalar> g(false);
    DecoderTrace<Scalar> trace;
    decoder_logits(g, params_, cfg_, g.constant(encoded), inputs, &trace);
    Matrix<double> mean = Matrix<double>::Zero(static_cast<Eigen::Index>(inputs.size()), encoded.rows());
    for (const auto& m : trace.last_cross_attention) mean += m.template cast<double>();
    mean /= static_cast<double>(trace.last_cross_attention.size());
    return emitted.empty() ? Matrix<double>(0, encoded.rows()) : mean;
  }

 private:
  static bool emittable(TokenId id) {
    return id != Vocabulary::kBosId && id != Vocabulary::kPadId && id != Vocabulary::kUnkId;
  }

  DecodeResult greedy(const Matrix<Scalar>& encoded, int max_length) {
    DecodeResult out;
    std::vector<TokenId> prefix{Vocabulary::kBosId};
    for (int step = 0; step < max_length; ++step) {
      const Eigen::VectorXd p = next_token_distribution(encoded, prefix);
      TokenId best = -1;
      for (Eigen::Index id = 0; id < p.size(); ++id)
        if (emittable(static_cast<TokenId>(id)) && (best < 0 || p(id) > p(best))) best = static_cast<TokenId>(id);
      out.log_prob += std::log(p(best));
      if (best == Vocabulary::kEosId) return out;
      out.tokens.push_back(best);
      prefix.push_back(best);
    }
    out.truncated = true;
    return out;
  }

  struct Hypothesis {
    std::vector<TokenId> tokens;  // EOS included once finished
    double log_prob = 0;
    bool finished = false;

    double score() const { return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size()); }
  };

  DecodeResult beam(const Matrix<Scalar>& encoded, int width, int max_length) {
    std::vector<Hypothesis> beams{Hypothesis{}};
    auto better = [](const Hypothesis& a, const Hypothesis& b) {
      if (a.score() != b.score()) return a.score() > b.score();
      return a.tokens < b.tokens;
    };
    for (int step = 0; step < max_length; ++step) {
      std::vector<Hypothesis> candidates;
      for (const auto& h : beams) {
        if (h.finished) {
          candidates.push_back(h);
          continue;
        }
        std::vector<TokenId> prefix{Vocabulary::kBosId};
        prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
        const Eigen::VectorXd p = next_token_distribution(encoded, prefix);
        for (Eigen::Index id = 0; id < p.size(); ++id) {
          if (!emittable(static_cast<TokenId>(id))) continue;
          Hypothesis next = h;
          next.tokens.push_back(static_cast<TokenId>(id));
          next.log_prob += std::log(p(id));
          next.finished = id == Vocabulary::kEosId;
          candidates.push_back(std::move(next));
        }
      }
      std::stable_sort(candidates.begin(), candidates.end(), better);
      if (candidates.size() > static_cast<std::size_t>(width)) candidates.resize(static_cast<std::size_t>(width));
      beams = std::move(candidates);
      if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return h.finished; })) break;
    }
    const Hypothesis* best = nullptr;
    for (const auto& h : beams)
      if (h.finished && (!best || better(h, *best))) best = &h;
    if (!best) best = &beams.front();
    DecodeResult out;
    out.tokens = best->tokens;
    out.log_prob = best->log_prob;
    out.truncated = !best->finished;
    if (best->finished) out.tokens.pop_back();
    return out;
  }

  ModelConfig cfg_;
  ParamStore<Scalar> params_;
};

extern template class Model<double>;
extern template class Model<float>;

}  // namespace mathrec::model
