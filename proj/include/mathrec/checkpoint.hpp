#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mathrec/model/model.hpp"
#include "mathrec/nn/optim.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec {

/// Raw little-endian tensor as stored on disk.
struct TensorRecord {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  bool trainable = true;
  std::vector<char> bytes;
};

/// File layout: "MRECCKPT", u32 version, u32 scalar width, u64 metadata
/// length, metadata JSON, u64 tensor count, then per tensor: u32 name length,
/// name, i64 rows, i64 cols, u8 trainable, payload.
struct CheckpointFile {
  std::uint32_t scalar_bytes = 8;
  nlohmann::json meta;
  std::vector<TensorRecord> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

template <typename Scalar>
TensorRecord to_record(const std::string& name, const nn::Matrix<Scalar>& m, bool trainable = true) {
  TensorRecord r{name, m.rows(), m.cols(), trainable, {}};
  r.bytes.resize(sizeof(Scalar) * static_cast<std::size_t>(m.size()));
  if (!r.bytes.empty()) std::memcpy(r.bytes.data(), m.data(), r.bytes.size());
  return r;
}

template <typename Scalar>
nn::Matrix<Scalar> from_record(const TensorRecord& r) {
  nn::Matrix<Scalar> m(r.rows, r.cols);
  if (r.bytes.size() != sizeof(Scalar) * static_cast<std::size_t>(m.size()))
    throw IoError("tensor '" + r.name + "' payload size does not match its shape");
  if (!r.bytes.empty()) std::memcpy(m.data(), r.bytes.data(), r.bytes.size());
  return m;
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const model::Model<Scalar>& net, const Vocabulary& vocab,
                     const nn::OptimizerState<Scalar>* optimizer = nullptr, const nlohmann::json& extra = {}) {
  CheckpointFile file;
  file.scalar_bytes = sizeof(Scalar);
  file.meta["config"] = net.config();
  file.meta["vocabulary"] = vocab.tokens();
  if (!extra.is_null()) file.meta["extra"] = extra;
  for (const auto& p : net.params()) file.tensors.push_back(to_record(p.name, p.value, p.trainable));
  if (optimizer) {
    file.meta["optimizer"] = {{"learning_rate", optimizer->learning_rate},
                              {"beta1", optimizer->beta1},
                              {"beta2", optimizer->beta2},
                              {"epsilon", optimizer->epsilon},
                              {"step", optimizer->step},
                              {"halve_patience", optimizer->halve_patience},
                              {"stop_patience", optimizer->stop_patience},
                              {"best_loss", optimizer->best_loss},
                              {"epochs_since_improvement", optimizer->epochs_since_improvement},
                              {"epochs_since_adjustment", optimizer->epochs_since_adjustment},
                              {"halvings", optimizer->halvings},
                              {"stop", optimizer->stop}};
    for (const auto& [name, m] : optimizer->first_moment) file.tensors.push_back(to_record("adam.m/" + name, m, false));
    for (const auto& [name, v] : optimizer->second_moment) file.tensors.push_back(to_record("adam.v/" + name, v, false));
  }
  write_checkpoint_file(path, file);
}

template <typename Scalar>
struct LoadedCheckpoint {
  model::Model<Scalar> model;
  Vocabulary vocabulary;
  std::optional<nn::OptimizerState<Scalar>> optimizer;
  nlohmann::json extra;
};

/// Restores a model. When `expected` is given, any vocabulary difference is a
/// CompatibilityError: tokens are never remapped.
template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected = nullptr) {
  const CheckpointFile file = read_checkpoint_file(path);
  if (file.scalar_bytes != sizeof(Scalar))
    throw CompatibilityError("checkpoint stores " + std::to_string(file.scalar_bytes * 8) + "-bit scalars, expected " +
                             std::to_string(sizeof(Scalar) * 8));
  Vocabulary vocab(file.meta.at("vocabulary").get<std::vector<std::string>>());
  if (expected && !(*expected == vocab)) throw CompatibilityError("checkpoint vocabulary differs from the current vocabulary");
  const auto cfg = file.meta.at("config").get<model::ModelConfig>();
  if (static_cast<std::size_t>(cfg.vocab_size) != vocab.size())
    throw CompatibilityError("checkpoint config and vocabulary disagree on size");

  LoadedCheckpoint<Scalar> out{model::Model<Scalar>(cfg), std::move(vocab), std::nullopt,
                               file.meta.contains("extra") ? file.meta["extra"] : nlohmann::json()};
  std::size_t restored = 0;
  std::optional<nn::OptimizerState<Scalar>> opt;
  if (file.meta.contains("optimizer")) {
    const auto& o = file.meta["optimizer"];
    opt.emplace();
    opt->learning_rate = o.at("learning_rate");
    opt->beta1 = o.at("beta1");
    opt->beta2 = o.at("beta2");
    opt->epsilon = o.at("epsilon");
    opt->step = o.at("step");
    opt->halve_patience = o.at("halve_patience");
    opt->stop_patience = o.at("stop_patience");
    opt->best_loss = o.at("best_loss").is_null() ? std::numeric_limits<double>::infinity() : o.at("best_loss").get<double>();
    opt->epochs_since_improvement = o.at("epochs_since_improvement");
    opt->epochs_since_adjustment = o.at("epochs_since_adjustment");
    opt->halvings = o.at("halvings");
    opt->stop = o.at("stop");
  }
  for (const auto& t : file.tensors) {
    if (t.name.rfind("adam.m/", 0) == 0 || t.name.rfind("adam.v/", 0) == 0) {
      if (!opt) throw IoError("optimizer moments without optimizer metadata");
      auto& slot = t.name[5] == 'm' ? opt->first_moment : opt->second_moment;
      slot[t.name.substr(7)] = from_record<Scalar>(t);
      continue;
    }
    if (!out.model.params().contains(t.name)) throw CompatibilityError("checkpoint has unknown parameter '" + t.name + "'");
    auto& p = out.model.params().get(t.name);
    if (p.value.rows() != t.rows || p.value.cols() != t.cols)
      throw CompatibilityError("parameter '" + t.name + "' has shape " + nn::shape_string(t.rows, t.cols) +
                               ", model expects " + nn::shape_string(p.value.rows(), p.value.cols()));
    p.value = from_record<Scalar>(t);
    p.trainable = t.trainable;
    ++restored;
  }
  if (restored != out.model.params().size()) throw CompatibilityError("checkpoint is missing parameters");
  out.optimizer = std::move(opt);
  return out;
}

}  // namespace mathrec
