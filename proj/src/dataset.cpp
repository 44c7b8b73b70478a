#include "mathrec/dataset.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mathrec/error.hpp"

namespace mathrec {

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split '" + s + "'");
}

std::filesystem::path DatasetManifest::resolve(const ManifestRecord& r) const {
  return r.image.is_absolute() ? r.image : root / r.image;
}

std::vector<ManifestRecord> DatasetManifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(r);
  return out;
}

DatasetManifest ingest(const std::filesystem::path& path, bool check_images) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::map<std::pair<std::string, std::string>, int> pair_line;
  std::map<std::string, std::pair<Split, int>> image_split;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(number) + ": expected split<TAB>image<TAB>latex");
    ManifestRecord r;
    try {
      r.split = parse_split(line.substr(0, t1));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    r.image = line.substr(t1 + 1, t2 - t1 - 1);
    r.latex = line.substr(t2 + 1);
    r.line = number;
    if (r.image.empty() || r.latex.empty())
      throw ParseError(path.string() + ":" + std::to_string(number) + ": empty image path or latex");
    try {
      tokenize(r.latex);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    const auto key = std::make_pair(r.image.string(), r.latex);
    if (auto it = pair_line.find(key); it != pair_line.end())
      throw InputError("duplicate pair on lines " + std::to_string(it->second) + " and " + std::to_string(number));
    pair_line.emplace(key, number);
    if (auto it = image_split.find(r.image.string()); it != image_split.end() && it->second.first != r.split)
      throw InputError("image " + r.image.string() + " appears in two splits (lines " +
                       std::to_string(it->second.second) + " and " + std::to_string(number) + ")");
    image_split.emplace(r.image.string(), std::make_pair(r.split, number));
    if (check_images && !std::filesystem::exists(m.resolve(r)))
      throw InputError(path.string() + ":" + std::to_string(number) + ": missing image " + m.resolve(r).string());
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : manifest.records) {
    if (r.latex.find_first_of("\t\n") != std::string::npos) throw InputError("latex contains a tab or newline");
    out << split_name(r.split) << '\t' << r.image.string() << '\t' << r.latex << '\n';
  }
}

std::vector<LabeledImage> load_images(const DatasetManifest& manifest, Split split) {
  std::vector<LabeledImage> out;
  for (const auto& r : manifest.records) {
    if (r.split != split) continue;
    out.push_back(LabeledImage{r.image.stem().string(), read_png(manifest.resolve(r)), tokenize(r.latex)});
  }
  return out;
}

namespace {

class ExpressionSampler {
 public:
  ExpressionSampler(std::uint64_t seed, const GlyphAtlas& atlas) : rng_(seed) {
    for (const char* a : {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "a", "b", "c", "n", "x", "y", "z",
                          "\\alpha", "\\beta"})
      if (atlas.has_glyph(a)) atoms_.push_back(a);
    for (const char* o : {"+", "-", "=", "\\times"})
      if (atlas.has_glyph(o)) operators_.push_back(o);
    if (atoms_.empty() || operators_.empty()) throw InputError("atlas lacks atoms or operators");
    parens_ = atlas.has_glyph("(") && atlas.has_glyph(")");
  }

  std::vector<std::string> expression(int depth) {
    std::vector<std::string> out;
    if (depth == 0) {
      out.push_back(pick(atoms_));
      return out;
    }
    sequence(depth, 3, out);
    return out;
  }

 private:
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  const std::string& pick(const std::vector<std::string>& v) { return v[below(v.size())]; }

  void sequence(int depth, std::size_t max_terms, std::vector<std::string>& out) {
    const std::size_t terms = 1 + below(max_terms);
    for (std::size_t i = 0; i < terms; ++i) {
      if (i > 0) out.push_back(pick(operators_));
      term(depth, out);
    }
  }

  void braced(int depth, std::vector<std::string>& out) {
    out.push_back("{");
    if (depth <= 0)
      out.push_back(pick(atoms_));
    else
      sequence(depth, 2, out);
    out.push_back("}");
  }

  void term(int depth, std::vector<std::string>& out) {
    const std::size_t roll = below(100);
    if (depth <= 0 || roll < 40) {
      out.push_back(pick(atoms_));
    } else if (roll < 60) {
      out.push_back(pick(atoms_));
      out.push_back("^");
      braced(depth - 1, out);
    } else if (roll < 75) {
      out.push_back(pick(atoms_));
      out.push_back("_");
      braced(depth - 1, out);
    } else if (roll < 88 || !parens_) {
      out.push_back("\\frac");
      braced(depth - 1, out);
      braced(depth - 1, out);
    } else {
      out.push_back("(");
      sequence(depth - 1, 2, out);
      out.push_back(")");
    }
  }

  std::mt19937_64 rng_;
  std::vector<std::string> atoms_, operators_;
  bool parens_ = false;
};

std::vector<Token> as_tokens(const std::vector<std::string>& texts) {
  std::vector<Token> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(make_token(t));
  return out;
}

}  // namespace

std::vector<std::string> generate_expressions(const SyntheticOptions& opt, const GlyphAtlas& atlas) {
  if (opt.max_depth < 0) throw InputError("max_depth must be >= 0");
  ExpressionSampler sampler(opt.seed, atlas);
  std::set<std::string> seen;
  std::vector<std::string> out;
  const std::size_t budget = 1000 + 200 * opt.count;
  for (std::size_t attempt = 0; out.size() < opt.count; ++attempt) {
    if (attempt >= budget)
      throw InputError("could only generate " + std::to_string(out.size()) + " distinct expressions of depth <= " +
                       std::to_string(opt.max_depth));
    const auto texts = sampler.expression(opt.max_depth);
    if (texts.size() > opt.max_tokens) continue;
    std::string latex = detokenize(as_tokens(texts));
    if (seen.insert(latex).second) out.push_back(std::move(latex));
  }
  return out;
}

std::vector<SyntheticItem> generate_synthetic(const SyntheticOptions& opt, const GlyphAtlas& atlas,
                                              const RenderStyle& style) {
  if (opt.valid_count + opt.test_count > opt.count) throw InputError("valid + test exceed count");
  const auto expressions = generate_expressions(opt, atlas);
  const std::size_t train_count = opt.count - opt.valid_count - opt.test_count;
  std::vector<SyntheticItem> items;
  items.reserve(expressions.size());
  for (std::size_t i = 0; i < expressions.size(); ++i) {
    SyntheticItem item;
    item.latex = expressions[i];
    item.split = i < train_count ? Split::Train : i < train_count + opt.valid_count ? Split::Valid : Split::Test;
    std::ostringstream id;
    id << "expr_";
    id.width(5);
    id.fill('0');
    id << i;
    item.labeled.id = id.str();
    item.labeled.target = tokenize(item.latex);
    item.labeled.image = to_gray_image(render_tokens(item.labeled.target, atlas), style, &item.boxes);
    items.push_back(std::move(item));
  }
  return items;
}

DatasetManifest write_synthetic(const std::vector<SyntheticItem>& items, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  DatasetManifest m;
  m.root = dir;
  std::ofstream boxes(dir / "boxes.jsonl");
  if (!boxes) throw IoError("cannot write " + (dir / "boxes.jsonl").string());
  for (const auto& item : items) {
    const std::filesystem::path rel = std::filesystem::path("images") / (item.labeled.id + ".png");
    write_png(dir / rel, item.labeled.image);
    m.records.push_back(ManifestRecord{item.split, rel, item.latex, 0});
    nlohmann::json j;
    j["image_id"] = item.labeled.id;
    j["latex"] = item.latex;
    j["boxes"] = nlohmann::json::array();
    for (const auto& b : item.boxes) j["boxes"].push_back({b.top, b.bottom, b.left, b.right});
    boxes << j.dump() << '\n';
  }
  write_manifest(m, dir / "manifest.tsv");
  return m;
}

void AugmentationPlan::validate() const {
  if (thresholds.empty()) throw InputError("augmentation plan has no thresholds");
  for (int t : thresholds)
    if (t < 0 || t > 255) throw InputError("threshold " + std::to_string(t) + " outside [0, 255]");
  if (eval_threshold < 0 || eval_threshold > 255) throw InputError("eval threshold outside [0, 255]");
}

AugmentResult augment(const std::vector<LabeledImage>& images, const std::vector<int>& thresholds,
                      SegmentationConfig base) {
  AugmentResult out;
  for (const auto& img : images)
    for (int t : thresholds) {
      base.threshold = t;
      base.validate();
      try {
        out.samples.push_back(Sample{img.id, t, segment(img.image, base), img.target});
      } catch (const EmptyExpressionError&) {
        out.warnings.push_back("dropped " + img.id + " at threshold " + std::to_string(t) + ": no components");
      }
    }
  return out;
}

AugmentResult augment_training(const std::vector<LabeledImage>& images, const AugmentationPlan& plan) {
  plan.validate();
  return augment(images, plan.thresholds);
}

AugmentResult prepare_evaluation(const std::vector<LabeledImage>& images, const AugmentationPlan& plan) {
  plan.validate();
  return augment(images, {plan.eval_threshold});
}

}  // namespace mathrec
