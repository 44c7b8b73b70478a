#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mathrec/error.hpp"

namespace mathrec::model {

enum class AttentionMode { SelfAttention, PCAttention };

struct ModelConfig {
  int embed_dim = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int ffn_multiplier = 4;
  std::vector<int> cnn_channels{8, 16, 16, 32, 32, 64};
  std::vector<int> position_hidden{64, 128};
  AttentionMode attention = AttentionMode::PCAttention;
  bool use_positions = true;       // false: p' is identically zero
  bool use_reconstruction = true;  // false: R = E (no encoder stack)
  int vocab_size = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (embed_dim < 4 || embed_dim % 2 != 0) throw InputError("embed_dim must be even and >= 4");
    if (heads < 1 || embed_dim % heads != 0) throw InputError("embed_dim must be divisible by heads");
    if (encoder_layers < 0 || decoder_layers < 1) throw InputError("invalid layer counts");
    if (cnn_channels.size() != 6) throw InputError("cnn_channels must list six convolution widths");
    if (position_hidden.size() != 2) throw InputError("position_hidden must list two hidden widths");
    if (vocab_size < 5) throw InputError("vocab_size must include controls and at least one token");
  }

  /// Parameter shapes depend on everything except the seed.
  bool compatible_with(const ModelConfig& o) const {
    return embed_dim == o.embed_dim && encoder_layers == o.encoder_layers && decoder_layers == o.decoder_layers &&
           heads == o.heads && ffn_multiplier == o.ffn_multiplier && cnn_channels == o.cnn_channels &&
           position_hidden == o.position_hidden && attention == o.attention && use_positions == o.use_positions &&
           use_reconstruction == o.use_reconstruction && vocab_size == o.vocab_size;
  }

  /// "pc", "self" or "nopos" (p' = 0 and no reconstruction stack).
  static ModelConfig variant(const std::string& name) { return variant(name, ModelConfig{}); }
  static ModelConfig variant(const std::string& name, ModelConfig base) {
    if (name == "pc") {
      base.attention = AttentionMode::PCAttention;
    } else if (name == "self") {
      base.attention = AttentionMode::SelfAttention;
    } else if (name == "nopos") {
      base.attention = AttentionMode::SelfAttention;
      base.use_positions = false;
      base.use_reconstruction = false;
    } else {
      throw InputError("unknown model variant '" + name + "' (expected pc, self or nopos)");
    }
    return base;
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(AttentionMode, {{AttentionMode::SelfAttention, "self"},
                                             {AttentionMode::PCAttention, "pc"}})

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"encoder_layers", c.encoder_layers},
       {"decoder_layers", c.decoder_layers},
       {"heads", c.heads},
       {"ffn_multiplier", c.ffn_multiplier},
       {"cnn_channels", c.cnn_channels},
       {"position_hidden", c.position_hidden},
       {"attention", c.attention},
       {"use_positions", c.use_positions},
       {"use_reconstruction", c.use_reconstruction},
       {"vocab_size", c.vocab_size},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("encoder_layers").get_to(c.encoder_layers);
  j.at("decoder_layers").get_to(c.decoder_layers);
  j.at("heads").get_to(c.heads);
  j.at("ffn_multiplier").get_to(c.ffn_multiplier);
  j.at("cnn_channels").get_to(c.cnn_channels);
  j.at("position_hidden").get_to(c.position_hidden);
  j.at("attention").get_to(c.attention);
  j.at("use_positions").get_to(c.use_positions);
  j.at("use_reconstruction").get_to(c.use_reconstruction);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("seed").get_to(c.seed);
}

}  // namespace mathrec::model
