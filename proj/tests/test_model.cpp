#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mathrec/model/model.hpp"
#include "mathrec/nn/gradcheck.hpp"
#include "transformer_oracle.hpp"

using namespace mathrec;
using namespace mathrec::model;
using M = nn::Matrix<double>;

namespace {

ModelConfig tiny(const std::string& variant = "pc", int d = 8, int layers = 1, int heads = 1, int vocab = 12) {
  ModelConfig c = ModelConfig::variant(variant);
  c.embed_dim = d;
  c.encoder_layers = layers;
  c.decoder_layers = layers;
  c.heads = heads;
  c.ffn_multiplier = 2;
  c.cnn_channels = {2, 2, 3, 3, 4, 4};
  c.position_hidden = {6, 6};
  c.vocab_size = vocab;
  c.seed = 17;
  return c;
}

M random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

ModelInput<double> random_input(int n, std::mt19937_64& rng) {
  ModelInput<double> in;
  in.patches = random_matrix(n, kPatchPixels, rng, 0, 1);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < n; ++i) {
    const int top = static_cast<int>(rng() % 20), left = static_cast<int>(rng() % 60);
    boxes.push_back({top, top + 1 + static_cast<int>(rng() % 15), left, left + 1 + static_cast<int>(rng() % 15)});
  }
  in.positions = position_matrix<double>(position_vectors(boxes));
  in.boxes = boxes;
  return in;
}

ModelInput<double> permuted(const ModelInput<double>& in, const std::vector<int>& perm) {
  ModelInput<double> out = in;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.patches.row(r) = in.patches.row(perm[i]);
    out.positions.row(r) = in.positions.row(perm[i]);
    out.boxes[i] = in.boxes[static_cast<std::size_t>(perm[i])];
  }
  return out;
}

void zero_all(ParamStore<double>& s) {
  for (auto& p : s) p.value.setZero();
}

M symbols(Model<double>& m, const ModelInput<double>& in) {
  Graph<double> g(false);
  return m.embed(g, in).symbols.value();
}

M pprime(Model<double>& m, const ModelInput<double>& in) {
  Graph<double> g(false);
  return m.embed(g, in).positions.value();
}

}  // namespace

TEST(SymbolEncoder, ShapeAndDeterminism) {
  std::mt19937_64 rng(1);
  Model<double> m(tiny());
  auto in = random_input(3, rng);
  in.patches.row(2) = in.patches.row(0);
  const M s = symbols(m, in);
  EXPECT_EQ(s.rows(), 3);
  EXPECT_EQ(s.cols(), 8);
  EXPECT_EQ(s.row(0), s.row(2));
  EXPECT_NE(s.row(0), s.row(1));
}

TEST(SymbolEncoder, ZeroParametersGiveZeroVectors) {
  std::mt19937_64 rng(2);
  Model<double> m(tiny());
  zero_all(m.params());
  EXPECT_TRUE((symbols(m, random_input(2, rng)).array() == 0).all());
  EXPECT_TRUE((pprime(m, random_input(2, rng)).array() == 0).all());
}

TEST(SymbolEncoder, WrongShapesAreRejected) {
  Model<double> m(tiny());
  Graph<double> g(false);
  EXPECT_THROW(encode_blocks(g, m.params(), m.config(), M(M::Zero(2, 899))), ShapeError);
  EXPECT_THROW(encode_positions(g, m.params(), M(M::Zero(2, 4))), ShapeError);
}

TEST(PositionEncoder, MatchesMlpOracleAndRepeatsForEqualInputs) {
  std::mt19937_64 rng(3);
  Model<double> m(tiny());
  auto in = random_input(4, rng);
  in.positions.row(3) = in.positions.row(1);
  const M p = pprime(m, in);
  EXPECT_EQ(p.row(1), p.row(3));
  EXPECT_LT((p - oracle::tf::position_mlp(in.positions, m.params())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Combine, SumsAndChecksPairing) {
  std::mt19937_64 rng(4);
  Graph<double> g(false);
  const M s = random_matrix(3, 8, rng), p = random_matrix(3, 8, rng);
  const M e = combine(g.constant(s), g.constant(p)).value();
  for (Eigen::Index i = 0; i < e.size(); ++i) EXPECT_EQ(e.data()[i], s.data()[i] + p.data()[i]);
  EXPECT_EQ(combine(g.constant(s), g.constant(M::Zero(3, 8))).value(), s);
  EXPECT_THROW(combine(g.constant(s), g.constant(M::Zero(2, 8))), PairingError);
}

TEST(Combine, RepeatedGlyphsDifferOnlyThroughPosition) {
  std::mt19937_64 rng(5);
  Model<double> m(tiny());
  auto in = random_input(2, rng);
  in.patches.row(1) = in.patches.row(0);
  Graph<double> g(false);
  const auto e = m.embed(g, in);
  EXPECT_EQ(e.symbols.value().row(0), e.symbols.value().row(1));
  EXPECT_NE(e.combined.value().row(0), e.combined.value().row(1));

  Model<double> nopos(tiny("nopos"));
  Graph<double> g2(false);
  const auto e2 = nopos.embed(g2, in);
  EXPECT_EQ(e2.combined.value().row(0), e2.combined.value().row(1));
}

TEST(SelfAttentionScores, Examples) {
  EXPECT_TRUE(((self_attention_scores<double>(M::Constant(5, 4, 0.3)).array() - 0.2).abs() < 1e-15).all());
  EXPECT_DOUBLE_EQ(self_attention_scores<double>(M::Constant(1, 4, 2.0))(0, 0), 1.0);
  M e(2, 4);
  e << 1, 0, 0, 0, 0, 2, 0, 0;
  // logits / sqrt(4): row 0 -> (0.5, 0), row 1 -> (0, 2)
  const M a = self_attention_scores<double>(e);
  EXPECT_NEAR(a(0, 0), std::exp(0.5) / (std::exp(0.5) + 1), 1e-15);
  EXPECT_NEAR(a(1, 1), std::exp(2.0) / (std::exp(2.0) + 1), 1e-15);
}

TEST(PositionScores, ZeroWeightsGiveZeroTable) {
  std::mt19937_64 rng(6);
  const M p = random_matrix(4, 3, rng);
  EXPECT_TRUE((position_scores<double>(p, random_matrix(6, 5, rng), M::Zero(5, 1)).array() == 0).all());
  EXPECT_TRUE((position_scores<double>(p, M::Zero(6, 5), random_matrix(5, 1, rng)).array() == 0).all());
  EXPECT_THROW(position_scores<double>(p, M::Zero(5, 5), M::Zero(5, 1)), ShapeError);
}

TEST(PositionScores, MatchesDirectFormulaOnTapeAndPlain) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5), d = 2 + static_cast<int>(rng() % 4);
    const M p = random_matrix(n, d, rng), wa = random_matrix(2 * d, d, rng), va = random_matrix(d, 1, rng);
    const oracle::tf::Mat want = oracle::tf::position_table(p, wa, va);
    EXPECT_LT((position_scores<double>(p, wa, va) - want).cwiseAbs().maxCoeff(), 1e-14);

    ParamStore<double> s;
    s.add("enc.pc.wa", wa);
    s.add("enc.pc.va", va);
    Graph<double> g(false);
    EncoderTrace<double> trace;
    const M tape = position_scores(g, s, g.constant(p), &trace).value();
    EXPECT_LT((tape - want).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(trace.position_score_calls, 1);
  }
}

TEST(PcAttentionScores, ZeroTableIsSelfAttentionAndRowShiftIsInvariant) {
  std::mt19937_64 rng(8);
  const M e = random_matrix(5, 4, rng);
  EXPECT_LT((pc_attention_scores<double>(e, M::Zero(5, 5)) - self_attention_scores<double>(e)).cwiseAbs().maxCoeff(),
            1e-15);
  M table = random_matrix(5, 5, rng);
  const M base = pc_attention_scores<double>(e, table);
  table.row(2).array() += 3.7;
  const M shifted = pc_attention_scores<double>(e, table);
  EXPECT_LT((base - shifted).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(pc_attention_scores<double>(e, M::Zero(4, 5)), ShapeError);
}

TEST(PcAttentionScores, TwoStepOracle) {
  std::mt19937_64 rng(9);
  const M e = random_matrix(4, 6, rng), table = random_matrix(4, 4, rng);
  const oracle::tf::Mat logits = oracle::tf::Mat(e) * oracle::tf::Mat(e).transpose() / std::sqrt(6.0) + table;
  EXPECT_LT((pc_attention_scores<double>(e, table) - oracle::tf::softmax(logits)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Encoder, OneLayerOneHeadMatchesHandRolledLayer) {
  std::mt19937_64 rng(10);
  for (const char* variant : {"pc", "self"}) {
    Model<double> m(tiny(variant, 4, 1, 1));
    const auto in = random_input(2, rng);
    Graph<double> g(false);
    const auto e = m.embed(g, in);
    const M r = model::encode(g, m.params(), m.config(), e.combined, e.positions).value();
    const auto want = oracle::tf::encoder(e.combined.value(), e.positions.value(), m.params(), m.config());
    EXPECT_LT((r - want).cwiseAbs().maxCoeff(), 1e-12) << variant;
  }
}

TEST(Encoder, DeeperMultiHeadStackMatchesOracle) {
  std::mt19937_64 rng(11);
  Model<double> m(tiny("pc", 8, 3, 2));
  const auto in = random_input(5, rng);
  Graph<double> g(false);
  const auto e = m.embed(g, in);
  EncoderTrace<double> trace;
  const M r = model::encode(g, m.params(), m.config(), e.combined, e.positions, &trace).value();
  std::vector<std::vector<oracle::tf::Mat>> maps;
  EXPECT_LT((r - oracle::tf::encoder(e.combined.value(), e.positions.value(), m.params(), m.config(), &maps))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  EXPECT_EQ(trace.position_score_calls, 1);
  ASSERT_EQ(trace.layer_maps.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t h = 0; h < 2; ++h) {
      const M& a = trace.layer_maps[l][h];
      EXPECT_LT((a - maps[l][h]).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_TRUE((a.array() > 0).all());
      for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-10);
    }
}

TEST(Encoder, PermutationEquivariant) {
  std::mt19937_64 rng(12);
  Model<double> m(tiny("pc", 8, 2, 2));
  const auto in = random_input(5, rng);
  std::vector<int> perm{3, 0, 4, 1, 2};
  const M r = m.encoded(in);
  const M rp = m.encoded(permuted(in, perm));
  for (int i = 0; i < 5; ++i) EXPECT_LT((rp.row(i) - r.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, NoReconstructionPassesEmbeddingsThrough) {
  std::mt19937_64 rng(13);
  Model<double> m(tiny("nopos"));
  const auto in = random_input(3, rng);
  EXPECT_EQ(m.encoded(in), symbols(m, in));
}

TEST(Encoder, MismatchedPositionsArePairingErrors) {
  Model<double> m(tiny());
  Graph<double> g(false);
  EXPECT_THROW(model::encode(g, m.params(), m.config(), g.constant(M::Zero(3, 8)), g.constant(M::Zero(2, 8))),
               PairingError);
}

TEST(Decoder, ZeroOutputProjectionIsUniform) {
  std::mt19937_64 rng(14);
  Model<double> m(tiny());
  m.params().get("dec.w_out").value.setZero();
  const auto p = m.next_token_distribution(m.encoded(random_input(3, rng)), {Vocabulary::kBosId, 5, 6});
  EXPECT_TRUE(((p.array() - 1.0 / 12).abs() < 1e-15).all());
}

TEST(Decoder, PrefixMustStartWithBos) {
  std::mt19937_64 rng(15);
  Model<double> m(tiny());
  const M r = m.encoded(random_input(2, rng));
  EXPECT_THROW(m.next_token_distribution(r, {}), ContractError);
  EXPECT_THROW(m.next_token_distribution(r, {5}), ContractError);
}

TEST(Decoder, LogitsMatchOracle) {
  std::mt19937_64 rng(16);
  for (int heads : {1, 2}) {
    Model<double> m(tiny("pc", 8, 2, heads));
    const M r = m.encoded(random_input(4, rng));
    const std::vector<int> inputs{Vocabulary::kBosId, 7, 4, 9};
    Graph<double> g(false);
    const M logits = decoder_logits(g, m.params(), m.config(), g.constant(r), inputs).value();
    EXPECT_LT((logits - oracle::tf::decoder_logits(r, inputs, m.params(), m.config())).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Decoder, DistributionSumsToOneAndIsBlockOrderInvariant) {
  std::mt19937_64 rng(17);
  Model<double> m(tiny("pc", 8, 2, 2));
  const auto in = random_input(4, rng);
  const std::vector<TokenId> prefix{Vocabulary::kBosId, 4, 5};
  const auto p = m.next_token_distribution(m.encoded(in), prefix);
  const auto q = m.next_token_distribution(m.encoded(permuted(in, {2, 3, 0, 1})), prefix);
  EXPECT_NEAR(p.sum(), 1.0, 1e-10);
  EXPECT_TRUE((p.array() >= 0).all());
  EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Decoder, Causality) {
  std::mt19937_64 rng(18);
  Model<double> m(tiny("pc", 8, 2, 2));
  const M r = m.encoded(random_input(3, rng));
  const std::vector<int> a{Vocabulary::kBosId, 4, 5, 6, 7, 8};
  for (std::size_t k = 1; k < a.size(); ++k) {
    auto b = a;
    b[k] = 11;
    Graph<double> g(false);
    const M la = decoder_logits(g, m.params(), m.config(), g.constant(r), a).value();
    const M lb = decoder_logits(g, m.params(), m.config(), g.constant(r), b).value();
    const auto rows = static_cast<Eigen::Index>(k);
    EXPECT_EQ(la.topRows(rows), lb.topRows(rows)) << k;
    EXPECT_NE(la.row(rows), lb.row(rows)) << k;
  }
}

TEST(SequenceNll, UniformModelCostsLengthTimesLogVocab) {
  std::mt19937_64 rng(19);
  Model<double> m(tiny());
  m.params().get("dec.w_out").value.setZero();
  const std::vector<TokenId> target{Vocabulary::kBosId, 4, 7, 7, 9, Vocabulary::kEosId};
  Graph<double> g(false);
  EXPECT_NEAR(m.loss(g, random_input(3, rng), target).value()(0, 0), 5 * std::log(12.0), 1e-12);
}

TEST(SequenceNll, MatchesLogSumOracleAndSkipsPad) {
  std::mt19937_64 rng(20);
  Model<double> m(tiny());
  const auto in = random_input(3, rng);
  const M r = m.encoded(in);
  const std::vector<TokenId> target{Vocabulary::kBosId, 4, Vocabulary::kPadId, 9, Vocabulary::kEosId};
  const std::vector<int> inputs(target.begin(), target.end() - 1);
  const auto logits = oracle::tf::decoder_logits(r, inputs, m.params(), m.config());
  double want = 0;
  for (int t : {0, 2, 3}) want += oracle::tf::sequence_nll(logits.row(t), {target[static_cast<std::size_t>(t) + 1]});
  Graph<double> g(false);
  EXPECT_NEAR(m.loss(g, in, target).value()(0, 0), want, 1e-10);
}

TEST(SequenceNll, ContractErrors) {
  std::mt19937_64 rng(21);
  Model<double> m(tiny());
  const auto in = random_input(2, rng);
  Graph<double> g(false);
  EXPECT_THROW(m.loss(g, in, {Vocabulary::kBosId, 4, 5}), ContractError);
  EXPECT_THROW(m.loss(g, in, {4, Vocabulary::kEosId}), ContractError);
  EXPECT_NO_THROW(m.loss(g, in, {Vocabulary::kBosId, Vocabulary::kUnkId, Vocabulary::kEosId}));
}

TEST(Decode, BeamWidthOneIsGreedyAndRerunsAgree) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    ModelConfig c = tiny("pc", 8, 1, 1);
    c.seed = 100 + static_cast<std::uint64_t>(trial);
    Model<double> m(c);
    const M r = m.encoded(random_input(3, rng));
    const auto greedy = m.decode(r, {DecodeStrategy::Greedy, 1, 10});
    const auto beam = m.decode(r, {DecodeStrategy::Beam, 1, 10});
    EXPECT_EQ(greedy.tokens, beam.tokens);
    EXPECT_EQ(greedy.truncated, beam.truncated);
    EXPECT_EQ(m.decode(r, {DecodeStrategy::Beam, 3, 10}).tokens, m.decode(r, {DecodeStrategy::Beam, 3, 10}).tokens);
  }
}

TEST(Decode, NeverEmitsControlTokensAndFlagsTruncation) {
  std::mt19937_64 rng(23);
  Model<double> m(tiny());
  m.params().get("dec.w_out").value.setZero();
  // Uniform distribution: ties fall to the smallest id, which is EOS among emittable tokens.
  const auto out = m.decode(m.encoded(random_input(2, rng)), {DecodeStrategy::Greedy, 1, 5});
  EXPECT_TRUE(out.tokens.empty());
  EXPECT_FALSE(out.truncated);
  // Layer-normed rows sum to zero, so a unit beta is what gives the EOS column a large negative logit.
  m.params().get("dec.ln_final.b").value.setOnes();
  m.params().get("dec.w_out").value.col(Vocabulary::kEosId).setConstant(-50);
  const auto longer = m.decode(m.encoded(random_input(2, rng)), {DecodeStrategy::Greedy, 1, 5});
  EXPECT_TRUE(longer.truncated);
  EXPECT_EQ(longer.tokens.size(), 5u);
  for (auto t : longer.tokens) EXPECT_GE(t, 4);
  EXPECT_THROW(m.decode(M::Zero(1, 8), {DecodeStrategy::Beam, 0, 5}), InputError);
}

TEST(DecoderAttention, RowsSumToOneAndSingleBlockIsOne) {
  std::mt19937_64 rng(24);
  Model<double> m(tiny("pc", 8, 2, 2));
  const M r = m.encoded(random_input(4, rng));
  const auto rows = m.decoder_attention(r, {5, 6, Vocabulary::kEosId});
  ASSERT_EQ(rows.rows(), 3);
  for (Eigen::Index t = 0; t < 3; ++t) EXPECT_NEAR(rows.row(t).sum(), 1.0, 1e-12);
  const auto one = m.decoder_attention(m.encoded(random_input(1, rng)), {5, 6});
  EXPECT_TRUE(((one.array() - 1.0).abs() < 1e-15).all());
}

TEST(CumulativeAttention, UniformAndConcentratedExamples) {
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 10; ++i) boxes.push_back({0, 4, 10 * i, 10 * i + 4});
  const std::vector<M> uniform{M::Constant(10, 10, 0.1)};
  EXPECT_DOUBLE_EQ(cumulative_nearest_attention(uniform, boxes, 10), 0.1);
  EXPECT_DOUBLE_EQ(cumulative_nearest_attention(uniform, boxes, 20), 0.2);
  EXPECT_DOUBLE_EQ(cumulative_nearest_attention(uniform, boxes, 30), 0.3);

  // Each block attends only to its left neighbour (the first block to its right one).
  M focused = M::Zero(10, 10);
  for (int i = 0; i < 10; ++i) focused(i, i == 0 ? 1 : i - 1) = 1;
  for (double k : {10.0, 20.0, 30.0, 100.0}) EXPECT_DOUBLE_EQ(cumulative_nearest_attention({focused}, boxes, k), 1.0);

  EXPECT_THROW(cumulative_nearest_attention(uniform, {boxes[0]}, 10), UndefinedMetricError);
  EXPECT_THROW(cumulative_nearest_attention(uniform, boxes, 0), InputError);
}

TEST(CumulativeAttention, PermutationInvariant) {
  std::mt19937_64 rng(25);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 7; ++i) {
    const int t = static_cast<int>(rng() % 50), l = static_cast<int>(rng() % 50);
    boxes.push_back({t, t + 3, l, l + 3});
  }
  const M a = nn::softmax_rows_value<double>(random_matrix(7, 7, rng, -3, 3));
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  M ap(7, 7);
  std::vector<BoundingBox> bp(7);
  for (int i = 0; i < 7; ++i) {
    bp[static_cast<std::size_t>(i)] = boxes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    for (int j = 0; j < 7; ++j) ap(i, j) = a(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  EXPECT_NEAR(cumulative_nearest_attention({a}, boxes, 30), cumulative_nearest_attention({ap}, bp, 30), 1e-12);
}

TEST(GradCheck, OnePcLayerIncludingPositionWeights) {
  std::mt19937_64 rng(26);
  Model<double> m(tiny("pc", 8, 1, 2));
  const auto in = random_input(3, rng);
  const M target = random_matrix(3, 8, rng);
  ParamStore<double>& s = m.params();
  for (auto& p : s) p.trainable = p.name.rfind("enc.", 0) == 0;
  const auto rep = nn::grad_check_report(
      [&](Graph<double>& g) {
        const auto e = m.embed(g, in);
        const auto r = model::encode(g, s, m.config(), e.combined, e.positions);
        return nn::sum(nn::multiply(r, g.constant(target)));
      },
      s, 1e-5);
  EXPECT_LT(rep.max_relative_error, 1e-4) << rep.worst_parameter;
  std::size_t pc = 0;
  for (const auto& p : s)
    if (p.name.rfind("enc.pc.", 0) == 0) pc += static_cast<std::size_t>(p.value.size());
  EXPECT_GT(rep.coordinates, pc);
}

TEST(Model, FloatAndDoubleAgreeClosely) {
  std::mt19937_64 rng(27);
  const auto cfg = tiny("pc", 8, 1, 2);
  Model<double> md(cfg);
  Model<float> mf(cfg);
  const auto in = random_input(3, rng);
  ModelInput<float> inf{in.patches.cast<float>(), in.positions.cast<float>(), in.boxes};
  EXPECT_LT((md.encoded(in) - mf.encoded(inf).cast<double>()).cwiseAbs().maxCoeff(), 1e-4);
}
