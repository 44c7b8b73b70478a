#include "mathrec/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "mathrec/error.hpp"

namespace mathrec {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

TokenKind classify_token(std::string_view text) {
  if (text == kBos || text == kEos || text == kPad || text == kUnk) return TokenKind::Control;
  if (text.size() >= 2 && text.front() == '\\') return TokenKind::Command;
  if (text == "{" || text == "}") return TokenKind::Brace;
  return TokenKind::Symbol;
}

Token make_token(std::string text) {
  const auto kind = classify_token(text);
  return {std::move(text), kind};
}

std::vector<Token> tokenize(std::string_view latex) {
  std::vector<Token> out;
  std::vector<std::size_t> open;
  std::size_t i = 0;
  while (i < latex.size()) {
    const char c = latex[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '\\') {
      if (i + 1 >= latex.size()) throw ParseError("dangling backslash at position " + std::to_string(i));
      std::size_t j = i + 1;
      if (is_alpha(latex[j])) {
        while (j < latex.size() && is_alpha(latex[j])) ++j;
      } else {
        ++j;
      }
      out.push_back({std::string(latex.substr(i, j - i)), TokenKind::Command});
      i = j;
      continue;
    }
    if (c == '{') {
      open.push_back(i);
      out.push_back({"{", TokenKind::Brace});
    } else if (c == '}') {
      if (open.empty()) throw ParseError("unmatched '}' at position " + std::to_string(i));
      open.pop_back();
      out.push_back({"}", TokenKind::Brace});
    } else {
      out.push_back({std::string(1, c), TokenKind::Symbol});
    }
    ++i;
  }
  if (!open.empty()) throw ParseError("unclosed '{' at position " + std::to_string(open.back()));
  return out;
}

std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.kind == TokenKind::Control) {
      if (t.text == kEos && i + 1 == tokens.size()) break;
      throw InputError("control token " + t.text + " at position " + std::to_string(i));
    }
    out += t.text;
    const bool more = i + 1 < tokens.size() && !(i + 2 == tokens.size() && tokens[i + 1].text == kEos);
    if (t.kind == TokenKind::Command && more) out += ' ';
  }
  return out;
}

std::vector<std::string> token_texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kBos, kEos, kPad, kUnk}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 4 || tokens_[kBosId] != kBos || tokens_[kEosId] != kEos || tokens_[kPadId] != kPad ||
      tokens_[kUnkId] != kUnk)
    throw InputError("vocabulary must start with <bos> <eos> <pad> <unk>");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InputError("empty token at id " + std::to_string(i));
    if (!lookup_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw InputError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

const std::string& Vocabulary::text(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

TokenId Vocabulary::id(const std::string& text) const {
  const auto it = lookup_.find(text);
  return it == lookup_.end() ? kUnkId : it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::vector<Token>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kBosId);
  for (const auto& t : tokens) ids.push_back(id(t.text));
  ids.push_back(kEosId);
  return ids;
}

std::vector<Token> Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<Token> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id == kBosId && i == 0) continue;
    if (id == kEosId && i + 1 == ids.size()) break;
    if (id == kBosId || id == kEosId || id == kPadId || id == kUnkId)
      throw InputError("cannot decode control token " + text(id) + " at position " + std::to_string(i));
    out.push_back(make_token(text(id)));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  for (const auto& t : tokens_) f << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(const std::vector<std::vector<Token>>& corpus) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::set<std::string> distinct;
  for (const auto& seq : corpus)
    for (const auto& t : seq)
      if (t.kind != TokenKind::Control) distinct.insert(t.text);
  std::vector<std::string> tokens{kBos, kEos, kPad, kUnk};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

}  // namespace mathrec
