#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mathrec/glyphs.hpp"
#include "mathrec/image.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec {

/// Turns a token sequence into a binary ink image. Throws RenderError on failure.
class Renderer {
 public:
  virtual ~Renderer() = default;
  virtual Grid<bool> render(const std::vector<Token>& tokens) const = 0;
};

class GlyphRenderer final : public Renderer {
 public:
  explicit GlyphRenderer(const GlyphAtlas& atlas = GlyphAtlas::standard()) : atlas_(&atlas) {}
  Grid<bool> render(const std::vector<Token>& tokens) const override;

 private:
  const GlyphAtlas* atlas_;
};

/// Runs a shell command to rasterize LaTeX, e.g. a latex + dvipng script.
/// `{latex}` in the template is replaced by a path to a file holding the
/// source and `{png}` by the path the command must write. Ink is any pixel
/// darker than `ink_threshold`.
class ExternalCommandRenderer final : public Renderer {
 public:
  ExternalCommandRenderer(std::string command_template, std::filesystem::path scratch_dir, int ink_threshold = 128);
  Grid<bool> render(const std::vector<Token>& tokens) const override;

 private:
  std::string template_;
  std::filesystem::path scratch_;
  int threshold_;
};

/// Deletes every column that holds no ink.
Grid<bool> remove_blank_columns(const Grid<bool>& ink);

bool same_image(const Grid<bool>& a, const Grid<bool>& b);

/// Pixel-identical renders. A prediction that fails to render never matches.
bool match(const std::vector<Token>& pred, const std::vector<Token>& gold, const Renderer& renderer);
bool match_ws(const std::vector<Token>& pred, const std::vector<Token>& gold, const Renderer& renderer);

using TokenStrings = std::vector<std::string>;

/// Sentence-level BLEU-4 with +1 smoothing on orders that have no match.
/// 0 when the prediction is empty or shares no unigram with the reference.
double bleu4(const TokenStrings& pred, const TokenStrings& gold);

struct TokenPair {
  TokenStrings pred;
  TokenStrings gold;
};

/// Unsmoothed corpus BLEU-4 over pooled clipped n-gram counts.
double corpus_bleu4(const std::vector<TokenPair>& pairs);

/// Clipped 4-gram recall. Throws UndefinedMetricError when gold has fewer than 4 tokens.
double rouge4(const TokenStrings& pred, const TokenStrings& gold);

struct EvalItem {
  std::string image_id;
  std::vector<Token> pred;
  std::vector<Token> gold;
  bool pred_failed = false;  // prediction unavailable (empty expression, decode failure)
};

struct ItemRecord {
  std::string image_id;
  bool match = false;
  bool match_ws = false;
  double bleu4 = 0;
  std::optional<double> rouge4;  // empty when gold is shorter than 4 tokens
  bool render_failure = false;
};

struct MetricReport {
  double match = 0;
  double match_ws = 0;
  double bleu4 = 0;   // corpus level
  double rouge4 = 0;  // mean over items where it is defined
  std::size_t rouge_items = 0;
  std::size_t render_failures = 0;
  std::vector<ItemRecord> items;
};

MetricReport evaluate_corpus(const std::vector<EvalItem>& items, const Renderer& renderer);

/// Summary TSV (`metric\tvalue` lines) and per-item JSON lines.
void write_report(const MetricReport& report, const std::filesystem::path& summary_tsv,
                  const std::filesystem::path& diagnostics_jsonl);

}  // namespace mathrec
