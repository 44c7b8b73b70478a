#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mathrec {

enum class TokenKind { Command, Brace, Symbol, Control };

struct Token {
  std::string text;
  TokenKind kind = TokenKind::Symbol;

  friend bool operator==(const Token&, const Token&) = default;
};

inline const std::string kBos = "<bos>";
inline const std::string kEos = "<eos>";
inline const std::string kPad = "<pad>";
inline const std::string kUnk = "<unk>";

TokenKind classify_token(std::string_view text);
Token make_token(std::string text);

/// Greedy left-to-right LaTeX tokenizer:
///   `\name`   longest alphabetic run after the backslash is one command token
///   `\c`      a backslash followed by one non-letter is one command token
///   `{ } ^ _` single tokens
///   anything else that is not whitespace becomes a one-character symbol.
/// Throws ParseError on unbalanced braces or a dangling backslash.
std::vector<Token> tokenize(std::string_view latex);

/// Joins tokens, inserting a single space after each command token that is
/// followed by another token. A trailing EOS is dropped; any other control
/// token is rejected.
std::string detokenize(const std::vector<Token>& tokens);

std::vector<std::string> token_texts(const std::vector<Token>& tokens);

using TokenId = int;

class Vocabulary {
 public:
  static constexpr TokenId kBosId = 0;
  static constexpr TokenId kEosId = 1;
  static constexpr TokenId kPadId = 2;
  static constexpr TokenId kUnkId = 3;

  Vocabulary();  // controls only
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& text(TokenId id) const;
  TokenId id(const std::string& text) const;  // kUnkId when absent
  bool contains(const std::string& text) const { return lookup_.count(text) > 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// BOS + ids + EOS; unknown tokens map to UNK.
  std::vector<TokenId> encode(const std::vector<Token>& tokens) const;
  /// Inverse of encode; BOS/EOS framing is stripped, PAD/UNK are rejected.
  std::vector<Token> decode(const std::vector<TokenId>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> lookup_;
};

/// Controls followed by every distinct corpus token in lexicographic order.
Vocabulary build_vocabulary(const std::vector<std::vector<Token>>& corpus);

}  // namespace mathrec
