#include "mathrec/metrics.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "mathrec/error.hpp"

namespace mathrec {
namespace {

using NgramCounts = std::map<TokenStrings, int>;

NgramCounts ngrams(const TokenStrings& tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[TokenStrings(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

int clipped_overlap(const NgramCounts& pred, const NgramCounts& gold) {
  int total = 0;
  for (const auto& [gram, count] : pred) {
    auto it = gold.find(gram);
    if (it != gold.end()) total += std::min(count, it->second);
  }
  return total;
}

int ngram_total(std::size_t length, std::size_t n) { return length >= n ? static_cast<int>(length - n + 1) : 0; }

double brevity_penalty(double pred_len, double gold_len) {
  if (pred_len <= 0) return 0;
  return pred_len > gold_len ? 1.0 : std::exp(1.0 - gold_len / pred_len);
}

std::optional<Grid<bool>> try_render(const std::vector<Token>& tokens, const Renderer& renderer) {
  try {
    return renderer.render(tokens);
  } catch (const RenderError&) {
    return std::nullopt;
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (std::size_t at = s.find(key); at != std::string::npos; at = s.find(key, at + value.size()))
    s.replace(at, key.size(), value);
}

}  // namespace

Grid<bool> GlyphRenderer::render(const std::vector<Token>& tokens) const { return render_tokens(tokens, *atlas_).ink; }

ExternalCommandRenderer::ExternalCommandRenderer(std::string command_template, std::filesystem::path scratch_dir,
                                                 int ink_threshold)
    : template_(std::move(command_template)), scratch_(std::move(scratch_dir)), threshold_(ink_threshold) {
  if (template_.find("{png}") == std::string::npos) throw InputError("render command must mention {png}");
}

Grid<bool> ExternalCommandRenderer::render(const std::vector<Token>& tokens) const {
  std::filesystem::create_directories(scratch_);
  const auto source = scratch_ / "expr.tex";
  const auto png = scratch_ / "expr.png";
  std::filesystem::remove(png);
  {
    std::ofstream out(source);
    if (!out) throw IoError("cannot write " + source.string());
    out << detokenize(tokens) << '\n';
  }
  std::string cmd = template_;
  replace_all(cmd, "{latex}", shell_quote(source.string()));
  replace_all(cmd, "{png}", shell_quote(png.string()));
  if (std::system(cmd.c_str()) != 0 || !std::filesystem::exists(png))
    throw RenderError("external renderer failed: " + cmd);
  const GrayImage img = read_png(png);
  return (img.pixels.cast<int>() < threshold_);
}

Grid<bool> remove_blank_columns(const Grid<bool>& ink) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < ink.cols(); ++c)
    if (ink.col(c).any()) keep.push_back(c);
  Grid<bool> out(ink.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = ink.col(keep[i]);
  return out;
}

bool same_image(const Grid<bool>& a, const Grid<bool>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a == b).all();
}

bool match(const std::vector<Token>& pred, const std::vector<Token>& gold, const Renderer& renderer) {
  const auto p = try_render(pred, renderer);
  const auto g = try_render(gold, renderer);
  return p && g && same_image(*p, *g);
}

bool match_ws(const std::vector<Token>& pred, const std::vector<Token>& gold, const Renderer& renderer) {
  const auto p = try_render(pred, renderer);
  const auto g = try_render(gold, renderer);
  return p && g && same_image(remove_blank_columns(*p), remove_blank_columns(*g));
}

double bleu4(const TokenStrings& pred, const TokenStrings& gold) {
  if (pred.empty()) return 0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const int hits = clipped_overlap(ngrams(pred, n), ngrams(gold, n));
    const int total = ngram_total(pred.size(), n);
    if (n == 1 && hits == 0) return 0;
    log_sum += hits == 0 ? std::log(1.0 / (total + 1.0)) : std::log(static_cast<double>(hits) / total);
  }
  return brevity_penalty(static_cast<double>(pred.size()), static_cast<double>(gold.size())) * std::exp(log_sum / 4);
}

double corpus_bleu4(const std::vector<TokenPair>& pairs) {
  double hits[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double pred_len = 0, gold_len = 0;
  for (const auto& pair : pairs) {
    pred_len += static_cast<double>(pair.pred.size());
    gold_len += static_cast<double>(pair.gold.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      hits[n - 1] += clipped_overlap(ngrams(pair.pred, n), ngrams(pair.gold, n));
      totals[n - 1] += ngram_total(pair.pred.size(), n);
    }
  }
  double log_sum = 0;
  for (int n = 0; n < 4; ++n) {
    if (hits[n] == 0) return 0;
    log_sum += std::log(hits[n] / totals[n]);
  }
  return brevity_penalty(pred_len, gold_len) * std::exp(log_sum / 4);
}

double rouge4(const TokenStrings& pred, const TokenStrings& gold) {
  if (gold.size() < 4) throw UndefinedMetricError("ROUGE-4 needs a reference of at least 4 tokens");
  return static_cast<double>(clipped_overlap(ngrams(pred, 4), ngrams(gold, 4))) / ngram_total(gold.size(), 4);
}

MetricReport evaluate_corpus(const std::vector<EvalItem>& items, const Renderer& renderer) {
  if (items.empty()) throw InputError("evaluate_corpus: no items");
  MetricReport report;
  std::vector<TokenPair> pairs;
  double rouge_sum = 0;
  for (const auto& item : items) {
    ItemRecord rec;
    rec.image_id = item.image_id;
    const TokenStrings pred = item.pred_failed ? TokenStrings{} : token_texts(item.pred);
    const TokenStrings gold = token_texts(item.gold);
    const auto gold_ink = try_render(item.gold, renderer);
    if (!gold_ink) throw RenderError("reference for '" + item.image_id + "' does not render");
    std::optional<Grid<bool>> pred_ink;
    if (!item.pred_failed) pred_ink = try_render(item.pred, renderer);
    rec.render_failure = !pred_ink.has_value();
    if (pred_ink) {
      rec.match = same_image(*pred_ink, *gold_ink);
      rec.match_ws = same_image(remove_blank_columns(*pred_ink), remove_blank_columns(*gold_ink));
    }
    rec.bleu4 = bleu4(pred, gold);
    if (gold.size() >= 4) {
      rec.rouge4 = rouge4(pred, gold);
      rouge_sum += *rec.rouge4;
      ++report.rouge_items;
    }
    report.match += rec.match;
    report.match_ws += rec.match_ws;
    report.render_failures += rec.render_failure;
    pairs.push_back({pred, gold});
    report.items.push_back(std::move(rec));
  }
  const auto n = static_cast<double>(items.size());
  report.match /= n;
  report.match_ws /= n;
  report.bleu4 = corpus_bleu4(pairs);
  report.rouge4 = report.rouge_items ? rouge_sum / static_cast<double>(report.rouge_items) : 0.0;
  return report;
}

void write_report(const MetricReport& report, const std::filesystem::path& summary_tsv,
                  const std::filesystem::path& diagnostics_jsonl) {
  std::ofstream tsv(summary_tsv);
  if (!tsv) throw IoError("cannot write " + summary_tsv.string());
  tsv.precision(10);
  tsv << "metric\tvalue\n"
      << "match\t" << report.match << '\n'
      << "match_ws\t" << report.match_ws << '\n'
      << "bleu4\t" << report.bleu4 << '\n'
      << "rouge4\t" << report.rouge4 << '\n'
      << "items\t" << report.items.size() << '\n'
      << "rouge4_items\t" << report.rouge_items << '\n'
      << "render_failures\t" << report.render_failures << '\n';

  std::ofstream jsonl(diagnostics_jsonl);
  if (!jsonl) throw IoError("cannot write " + diagnostics_jsonl.string());
  for (const auto& rec : report.items) {
    nlohmann::json j{{"image_id", rec.image_id},
                     {"match", rec.match},
                     {"match_ws", rec.match_ws},
                     {"bleu4", rec.bleu4},
                     {"rouge4", rec.rouge4 ? nlohmann::json(*rec.rouge4) : nlohmann::json(nullptr)},
                     {"render_failure", rec.render_failure}};
    jsonl << j.dump() << '\n';
  }
}

}  // namespace mathrec
