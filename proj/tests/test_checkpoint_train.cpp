#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mathrec/attention_export.hpp"
#include "mathrec/checkpoint.hpp"
#include "mathrec/dataset.hpp"
#include "mathrec/train.hpp"

using namespace mathrec;
using namespace mathrec::model;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig small_config(int vocab, std::uint64_t seed = 3) {
  ModelConfig c;
  c.embed_dim = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.cnn_channels = {4, 4, 8, 8, 8, 8};
  c.position_hidden = {16, 16};
  c.vocab_size = vocab;
  c.seed = seed;
  return c;
}

LabeledImage rendered(const std::string& id, const std::string& latex) {
  return {id, to_gray_image(render_tokens(tokenize(latex)), {}), tokenize(latex)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresEverything) {
  const auto vocab = build_vocabulary({tokenize("x^{2}+y")});
  Model<double> net(small_config(static_cast<int>(vocab.size())));
  nn::OptimizerState<double> opt;
  opt.learning_rate = 1.25e-4;
  opt.step = 7;
  opt.halvings = 1;
  opt.first_moment["dec.w_out"] = nn::Matrix<double>::Constant(2, 2, 0.5);
  opt.second_moment["dec.w_out"] = nn::Matrix<double>::Constant(2, 2, 0.25);
  net.params().get("cnn.fc.b").trainable = false;
  const auto dir = fresh_dir("mathrec_ckpt");
  save_checkpoint(dir / "a.ckpt", net, vocab, &opt, {{"max_decode_length", 9}});

  const auto loaded = load_checkpoint<double>(dir / "a.ckpt", &vocab);
  EXPECT_TRUE(loaded.vocabulary == vocab);
  EXPECT_TRUE(loaded.model.config().compatible_with(net.config()));
  EXPECT_EQ(loaded.model.config().seed, net.config().seed);
  for (const auto& p : net.params()) {
    const auto& q = loaded.model.params().get(p.name);
    EXPECT_EQ(q.value, p.value) << p.name;
    EXPECT_EQ(q.trainable, p.trainable) << p.name;
  }
  ASSERT_TRUE(loaded.optimizer.has_value());
  EXPECT_EQ(loaded.optimizer->step, 7);
  EXPECT_EQ(loaded.optimizer->halvings, 1);
  EXPECT_DOUBLE_EQ(loaded.optimizer->learning_rate, 1.25e-4);
  EXPECT_TRUE(std::isinf(loaded.optimizer->best_loss));
  EXPECT_EQ(loaded.optimizer->second_moment.at("dec.w_out"), opt.second_moment["dec.w_out"]);
  EXPECT_EQ(loaded.extra.at("max_decode_length"), 9);

  // Saving the loaded state again reproduces the file byte for byte.
  save_checkpoint(dir / "b.ckpt", loaded.model, loaded.vocabulary, &*loaded.optimizer, loaded.extra);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
}

TEST(Checkpoint, IncompatibilitiesAreHardErrors) {
  const auto vocab = build_vocabulary({tokenize("a+b")});
  Model<float> net(small_config(static_cast<int>(vocab.size())));
  const auto dir = fresh_dir("mathrec_ckpt_bad");
  save_checkpoint(dir / "f.ckpt", net, vocab);
  EXPECT_NO_THROW(load_checkpoint<float>(dir / "f.ckpt", &vocab));
  EXPECT_THROW(load_checkpoint<double>(dir / "f.ckpt"), CompatibilityError);
  const auto other = build_vocabulary({tokenize("a+c")});
  EXPECT_THROW(load_checkpoint<float>(dir / "f.ckpt", &other), CompatibilityError);
  EXPECT_EQ(read_checkpoint_file(dir / "f.ckpt").scalar_bytes, 4u);

  std::string bytes = slurp(dir / "f.ckpt");
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  EXPECT_THROW(load_checkpoint<float>(dir / "magic.ckpt"), IoError);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint<float>(dir / "short.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint<float>(dir / "absent.ckpt"), IoError);
}

TEST(Train, OverfitsOnePairAndDecodesIt) {
  const auto image = rendered("x2", "x^{2}");
  const auto vocab = build_vocabulary({image.target});
  Model<double> net(small_config(static_cast<int>(vocab.size())));
  const auto samples = encode_samples<double>(augment({image}, {160}).samples, vocab);
  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.batch_size = 1;
  cfg.learning_rate = 3e-3;
  cfg.use_schedule = false;
  const auto result = train(net, vocab, samples, {}, cfg);
  EXPECT_LT(result.epochs[static_cast<std::size_t>(result.best_epoch - 1)].valid_loss, 0.05);
  const auto p = predict_image(net, vocab, "x2", image.image, {}, {DecodeStrategy::Greedy, 1, 8});
  EXPECT_EQ(p.latex, "x^{2}");
  EXPECT_FALSE(p.truncated);
  const auto beam = predict_image(net, vocab, "x2", image.image, {}, {DecodeStrategy::Beam, 3, 8});
  EXPECT_EQ(beam.latex, "x^{2}");
}

TEST(Train, SeededRunsProduceIdenticalLogsAndCheckpoints) {
  const std::vector<LabeledImage> images{rendered("a", "a+b"), rendered("b", "x_{1}")};
  const auto vocab = build_vocabulary({images[0].target, images[1].target});
  const auto samples = encode_samples<double>(augment(images, {160, 200}).samples, vocab);
  const auto d1 = fresh_dir("mathrec_det1"), d2 = fresh_dir("mathrec_det2");
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 2;
  std::vector<std::string> files{"train_log.tsv", "best.ckpt", "last.ckpt"};
  for (const auto& dir : {d1, d2}) {
    Model<double> net(small_config(static_cast<int>(vocab.size())));
    cfg.output_dir = dir;
    train(net, vocab, samples, samples, cfg);
  }
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  std::ifstream log(d1 / "train_log.tsv");
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch\ttrain_loss\tvalid_loss\tlr\timproved\thalved\tstop");
}

TEST(Train, ConstantValidationLossHalvesEveryThreeEpochsAndStopsAfterTen) {
  const std::vector<LabeledImage> images{rendered("a", "a+b")};
  const auto vocab = build_vocabulary({images[0].target});
  const auto samples = encode_samples<double>(augment(images, {160}).samples, vocab);
  Model<double> net(small_config(static_cast<int>(vocab.size())));
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.learning_rate = 1e-300;  // updates vanish against the weights, so the loss never moves
  const auto r = train(net, vocab, samples, samples, cfg);
  std::vector<int> halved;
  for (const auto& e : r.epochs)
    if (e.event.halved) halved.push_back(e.epoch);
  EXPECT_EQ(halved, (std::vector<int>{4, 7, 10}));
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.epochs.size(), 11u);
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(Train, RejectsEmptyDataAndBadConfig) {
  const auto vocab = build_vocabulary({tokenize("a")});
  Model<double> net(small_config(static_cast<int>(vocab.size())));
  EXPECT_THROW(train<double>(net, vocab, {}, {}, TrainConfig{}), InputError);
}

TEST(Predict, BlankImageIsFlaggedNotFatal) {
  const auto vocab = build_vocabulary({tokenize("a")});
  Model<double> net(small_config(static_cast<int>(vocab.size())));
  const auto p = predict_image(net, vocab, "blank", GrayImage(20, 20, 255), {}, {});
  EXPECT_TRUE(p.empty_expression);
  EXPECT_TRUE(p.latex.empty());

  const auto page = rendered("q", "a").image;
  const auto first = predict_image(net, vocab, "q", page, {}, {DecodeStrategy::Greedy, 1, 4});
  const auto again = predict_image(net, vocab, "q", page, {}, {DecodeStrategy::Greedy, 1, 4});
  EXPECT_EQ(first.tokens, again.tokens);

  const auto dir = fresh_dir("mathrec_predict");
  write_predictions(dir / "pred.tsv", {p, first});
  const auto lines = read_predictions(dir / "pred.tsv");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].image_id, "blank");
  EXPECT_EQ(lines[0].latex, "");
  EXPECT_EQ(lines[1].latex, first.latex);
  const std::string flags = slurp(dir / "pred.tsv.flags");
  EXPECT_NE(flags.find("blank\tempty-expression"), std::string::npos) << flags;
}

TEST(AttentionExport, MatrixTextRoundTripAndFiles) {
  const auto dir = fresh_dir("mathrec_attn");
  AttentionMatrix m(2, 3);
  m << 0.1, 0.2, 0.7, 0.25, 0.25, 0.5;
  write_matrix_text(dir / "m.txt", m);
  EXPECT_LT((read_matrix_text(dir / "m.txt") - m).cwiseAbs().maxCoeff(), 1e-12);

  const auto page = rendered("e", "a+b").image;
  const auto boxes = segment(page, {}).boxes();
  ASSERT_EQ(boxes.size(), 3u);
  AttentionMatrix square = AttentionMatrix::Constant(3, 3, 1.0 / 3);
  export_encoder_attention(dir / "enc", page, boxes, {{square, square}});
  EXPECT_TRUE(fs::exists(dir / "enc/layer0_head1.txt"));
  EXPECT_TRUE(fs::exists(dir / "enc/layer0_head0_query2.png"));
  export_decoder_attention(dir / "dec", page, boxes, {"a", "+"}, m.leftCols(3));
  EXPECT_TRUE(fs::exists(dir / "dec/decoder_step1.png"));
  std::ifstream tsv(dir / "dec/decoder_cross.tsv");
  std::string line;
  std::getline(tsv, line);
  EXPECT_EQ(line.rfind("0\ta\t", 0), 0u) << line;

  const auto overlay = attention_overlay(page, boxes, Eigen::RowVector3d(0, 0, 1), 0);
  const auto& b = boxes[2];
  EXPECT_GT(overlay.r(b.top, b.left), overlay.g(b.top, b.left));
  EXPECT_THROW(export_decoder_attention(dir / "bad", page, boxes, {"a"}, m), ShapeError);
}
