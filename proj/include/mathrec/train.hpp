#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mathrec/checkpoint.hpp"
#include "mathrec/dataset.hpp"
#include "mathrec/model/model.hpp"
#include "mathrec/nn/optim.hpp"

namespace mathrec {

template <typename Scalar>
struct EncodedSample {
  std::string id;
  model::ModelInput<Scalar> input;
  std::vector<TokenId> target;  // BOS ... EOS

  std::size_t steps() const { return target.size() - 1; }
};

template <typename Scalar>
std::vector<EncodedSample<Scalar>> encode_samples(const std::vector<Sample>& samples, const Vocabulary& vocab) {
  std::vector<EncodedSample<Scalar>> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back({s.image_id, model::make_input<Scalar>(s.segmentation), vocab.encode(s.target)});
  return out;
}

struct TrainConfig {
  int max_epochs = 200;
  int batch_size = 8;
  double learning_rate = 3e-4;
  std::uint64_t seed = 1;
  bool use_schedule = true;  // plateau halving and early stop on validation loss
  bool restore_best = true;  // leave the best-validation weights in the model
  std::filesystem::path output_dir;  // empty: keep everything in memory
  nlohmann::json metadata = nlohmann::json::object();  // copied into every checkpoint
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0;  // per target token
  double valid_loss = 0;  // per target token
  double learning_rate = 0;
  nn::ScheduleEvent event;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_valid_loss = 0;
  bool stopped_early = false;
};

/// Mean per-token negative log-likelihood without gradient tracking.
template <typename Scalar>
double mean_token_loss(model::Model<Scalar>& net, const std::vector<EncodedSample<Scalar>>& data) {
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& s : data) {
    nn::Graph<Scalar> g(false);
    total += static_cast<double>(net.loss(g, s.input, s.target).value()(0, 0));
    tokens += s.steps();
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on minibatches of per-sample graphs. Each batch minimizes the mean
/// over its samples of the summed token loss. `valid` may be empty, in which
/// case the schedule watches the training loss.
template <typename Scalar>
TrainResult train(model::Model<Scalar>& net, const Vocabulary& vocab, const std::vector<EncodedSample<Scalar>>& train_set,
                  const std::vector<EncodedSample<Scalar>>& valid, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw InputError("training set is empty");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw InputError("batch size and epochs must be positive");
  nn::OptimizerState<Scalar> opt;
  opt.learning_rate = cfg.learning_rate;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::ofstream log;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    log.open(cfg.output_dir / "train_log.tsv");
    log << "epoch\ttrain_loss\tvalid_loss\tlr\timproved\thalved\tstop\n";
  }

  TrainResult result;
  std::vector<nn::Matrix<Scalar>> best;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto inv_batch = static_cast<Scalar>(1.0 / static_cast<double>(stop - start));
      net.params().zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train_set[order[k]];
        nn::Graph<Scalar> g(true);
        const auto loss = net.loss(g, s.input, s.target);
        const double value = static_cast<double>(loss.value()(0, 0));
        if (!std::isfinite(value)) {
          if (!cfg.output_dir.empty()) {
            std::ofstream dump(cfg.output_dir / "nonfinite_dump.json");
            dump << nlohmann::json{{"epoch", epoch}, {"sample", s.id}, {"learning_rate", opt.learning_rate},
                                   {"step", opt.step}, {"target", s.target}}
                        .dump(2);
          }
          throw NumericError("non-finite loss on sample " + s.id + " in epoch " + std::to_string(epoch));
        }
        epoch_loss += value;
        epoch_tokens += s.steps();
        g.backward(nn::scale(loss, inv_batch));
      }
      nn::adam_step(net.params(), opt);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    entry.valid_loss = valid.empty() ? mean_token_loss(net, train_set) : mean_token_loss(net, valid);
    entry.learning_rate = opt.learning_rate;
    if (cfg.use_schedule) {
      entry.event = nn::lr_schedule(opt, entry.valid_loss);
    } else {
      entry.event.improved = entry.valid_loss < opt.best_loss;
      if (entry.event.improved) opt.best_loss = entry.valid_loss;
    }
    if (entry.event.improved) {
      result.best_epoch = epoch;
      result.best_valid_loss = entry.valid_loss;
      best.clear();
      for (const auto& p : net.params()) best.push_back(p.value);
      if (!cfg.output_dir.empty()) {
        auto extra = cfg.metadata;
        extra["epoch"] = epoch;
        extra["valid_loss"] = entry.valid_loss;
        save_checkpoint(cfg.output_dir / "best.ckpt", net, vocab, &opt, extra);
      }
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (log.is_open())
      log << epoch << '\t' << entry.train_loss << '\t' << entry.valid_loss << '\t' << entry.learning_rate << '\t'
          << entry.event.improved << '\t' << entry.event.halved << '\t' << entry.event.stop << '\n'
          << std::flush;
    result.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.event.stop) {
      result.stopped_early = true;
      break;
    }
  }
  if (cfg.restore_best && !best.empty()) {
    std::size_t i = 0;
    for (auto& p : net.params()) p.value = best[i++];
  }
  if (!cfg.output_dir.empty()) {
    auto extra = cfg.metadata;
    extra["epoch"] = result.epochs.back().epoch;
    save_checkpoint(cfg.output_dir / "last.ckpt", net, vocab, &opt, extra);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

struct Prediction {
  std::string image_id;
  std::vector<Token> tokens;
  std::string latex;
  bool empty_expression = false;  // segmentation found no symbols
  bool truncated = false;         // hit the length limit before EOS
};

template <typename Scalar>
Prediction predict_image(model::Model<Scalar>& net, const Vocabulary& vocab, const std::string& id,
                         const GrayImage& image, const SegmentationConfig& seg_cfg, const model::DecodeConfig& dc) {
  Prediction p;
  p.image_id = id;
  Segmentation seg;
  try {
    seg = segment(image, seg_cfg);
  } catch (const EmptyExpressionError&) {
    p.empty_expression = true;
    return p;
  }
  const auto decoded = net.decode(model::make_input<Scalar>(seg), dc);
  std::vector<TokenId> framed{Vocabulary::kBosId};
  framed.insert(framed.end(), decoded.tokens.begin(), decoded.tokens.end());
  p.tokens = vocab.decode(framed);
  p.latex = detokenize(p.tokens);
  p.truncated = decoded.truncated;
  return p;
}

/// `image_id<TAB>latex` per line; flagged records also go to `<path>.flags`.
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);

struct PredictionLine {
  std::string image_id;
  std::string latex;
};

std::vector<PredictionLine> read_predictions(const std::filesystem::path& path);

}  // namespace mathrec
