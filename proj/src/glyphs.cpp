#include "mathrec/glyphs.hpp"

#include <algorithm>
#include <optional>

#include "mathrec/error.hpp"

namespace mathrec {
namespace {

// Each drawing uses one character per separately drawn stroke ('#', '*').
struct GlyphArt {
  const char* token;
  const char* rows[kGlyphRows];
};

// clang-format off
const GlyphArt kArt[] = {
    {"0", {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
    {"1", {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {"2", {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
    {"3", {"####.", "....#", "....#", ".###.", "....#", "....#", "####."}},
    {"4", {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
    {"5", {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
    {"6", {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
    {"7", {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
    {"8", {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
    {"9", {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
    {"a", {".....", ".....", ".###.", "....#", ".####", "#...#", ".####"}},
    {"b", {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."}},
    {"c", {".....", ".....", ".###.", "#....", "#....", "#...#", ".###."}},
    {"n", {".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
    {"x", {".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"}},
    {"y", {".....", "#...#", "#...#", ".####", "....#", "#...#", ".###."}},
    {"z", {".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"}},
    {"+", {".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."}},
    {"-", {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
    {"=", {".....", ".....", "#####", ".....", "*****", ".....", "....."}},
    {"(", {"...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."}},
    {")", {".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."}},
    {"\\alpha", {".....", ".....", ".##.#", "#..#.", "#..#.", "#..#.", ".##.#"}},
    {"\\beta", {".##..", "#..#.", "#.#..", "#..#.", "#...#", "##..#", "#.##."}},
    {"\\times", {".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "....."}},
};
// clang-format on

Glyph from_art(const GlyphArt& art) {
  int first = 5, last = -1;
  std::vector<char> marks;
  for (const char* row : art.rows)
    for (int c = 0; row[c]; ++c)
      if (row[c] != '.') {
        first = std::min(first, c);
        last = std::max(last, c);
        if (std::find(marks.begin(), marks.end(), row[c]) == marks.end()) marks.push_back(row[c]);
      }
  Glyph g;
  g.token = art.token;
  g.width = last - first + 1;
  for (char mark : marks) {
    Grid<bool> part = Grid<bool>::Constant(kGlyphRows, g.width, false);
    for (int r = 0; r < kGlyphRows; ++r)
      for (int c = 0; c < g.width; ++c) part(r, c) = art.rows[r][first + c] == mark;
    g.parts.push_back(std::move(part));
  }
  return g;
}

constexpr int kBaseScale = 2;
constexpr int kGap = 3;  // blank pixels between neighbouring items; keeps halos apart

// Something drawn: either a glyph stroke scaled by `scale`, or a solid bar.
struct Piece {
  int x = 0, y = 0;  // left column and top row; y is relative to the baseline
  int scale = 1;
  const Grid<bool>* stroke = nullptr;
  int bar_width = 0, bar_height = 0;
  std::string token;
};

struct Box {
  int width = 0;
  int ascent = 0;   // rows above the baseline
  int descent = 0;  // rows at or below the baseline
  std::vector<Piece> pieces;

  void place(const Box& other, int dx, int dy) {
    for (Piece p : other.pieces) {
      p.x += dx;
      p.y += dy;
      pieces.push_back(std::move(p));
    }
  }
};

Box glyph_box(const Glyph& g, int scale) {
  Box b;
  b.width = g.width * scale;
  b.ascent = kGlyphRows * scale;
  for (const auto& part : g.parts) b.pieces.push_back(Piece{0, -b.ascent, scale, &part, 0, 0, g.token});
  return b;
}

Box blank_box(int width) {
  Box b;
  b.width = width;
  return b;
}

Box hlist(const std::vector<Box>& items) {
  Box out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out.width += kGap;
    first = false;
    out.place(item, out.width, 0);
    out.width += item.width;
    out.ascent = std::max(out.ascent, item.ascent);
    out.descent = std::max(out.descent, item.descent);
  }
  return out;
}

Box with_scripts(const Box& base, const std::optional<Box>& sup, const std::optional<Box>& sub, int scale) {
  Box out = base;
  const int x = base.width + kGap;
  int script_width = 0;
  if (sup) {
    const int shift = -3 * scale;
    out.place(*sup, x, shift);
    out.ascent = std::max(out.ascent, sup->ascent - shift);
    out.descent = std::max(out.descent, sup->descent + shift);
    script_width = std::max(script_width, sup->width);
  }
  if (sub) {
    const int shift = 3 * scale;
    out.place(*sub, x, shift);
    out.ascent = std::max(out.ascent, sub->ascent - shift);
    out.descent = std::max(out.descent, sub->descent + shift);
    script_width = std::max(script_width, sub->width);
  }
  out.width = x + script_width;
  return out;
}

Box fraction(const Box& num, const Box& den, int scale) {
  Box out;
  out.width = std::max(num.width, den.width) + 2 * scale;
  const int bar_top = -4 * scale;
  const int bar_bottom = bar_top + scale;  // exclusive
  out.pieces.push_back(Piece{0, bar_top, 1, nullptr, out.width, scale, "\\frac"});
  // Numerator's lowest ink row sits kGap rows above the bar, centred horizontally.
  const int num_shift = bar_top - kGap - num.descent;
  out.place(num, (out.width - num.width) / 2, num_shift);
  const int den_shift = bar_bottom + kGap + den.ascent;
  out.place(den, (out.width - den.width) / 2, den_shift);
  out.ascent = std::max(-bar_top, num.ascent - num_shift);
  out.descent = std::max(0, den.descent + den_shift);
  return out;
}

class Layout {
 public:
  Layout(const std::vector<Token>& tokens, const GlyphAtlas& atlas) : tokens_(tokens), atlas_(atlas) {}

  Box run() {
    Box b = list(kBaseScale, false);
    if (pos_ != tokens_.size()) fail("unexpected '}'");
    return b;
  }

 private:
  struct Item {
    Box base;
    std::optional<Box> sup, sub;
  };

  [[noreturn]] void fail(const std::string& what) const {
    throw RenderError(what + " at token " + std::to_string(pos_));
  }

  bool at_end() const { return pos_ >= tokens_.size(); }
  const std::string& peek() const { return tokens_[pos_].text; }

  Box list(int scale, bool in_group) {
    std::vector<Item> items;
    while (!at_end()) {
      const std::string& t = peek();
      if (t == "}") {
        if (!in_group) fail("unbalanced '}'");
        break;
      }
      if (t == "^" || t == "_") {
        if (items.empty()) fail("script '" + t + "' has no base");
        const bool up = t == "^";
        ++pos_;
        auto& slot = up ? items.back().sup : items.back().sub;
        if (slot) fail(std::string("double ") + (up ? "superscript" : "subscript"));
        slot = argument(std::max(1, scale - 1));
        continue;
      }
      items.push_back(Item{atom(scale), std::nullopt, std::nullopt});
    }
    std::vector<Box> boxes;
    boxes.reserve(items.size());
    for (const auto& it : items)
      boxes.push_back(it.sup || it.sub ? with_scripts(it.base, it.sup, it.sub, scale) : it.base);
    return hlist(boxes);
  }

  Box group(int scale) {
    ++pos_;  // '{'
    Box b = list(scale, true);
    if (at_end()) fail("missing '}'");
    ++pos_;
    return b;
  }

  Box argument(int scale) {
    if (at_end()) fail("missing argument");
    const std::string& t = peek();
    if (t == "}" || t == "^" || t == "_") fail("missing argument");
    return atom(scale);
  }

  Box atom(int scale) {
    const std::string t = peek();
    if (t == "{") return group(scale);
    if (t == "\\frac") {
      ++pos_;
      Box num = argument(scale);
      Box den = argument(scale);
      return fraction(num, den, scale);
    }
    if (int w = GlyphAtlas::spacing_width(t); w > 0) {
      ++pos_;
      return blank_box(w);
    }
    if (atlas_.has_glyph(t)) {
      ++pos_;
      return glyph_box(atlas_.glyph(t), scale);
    }
    fail("no glyph or layout rule for '" + t + "'");
  }

  const std::vector<Token>& tokens_;
  const GlyphAtlas& atlas_;
  std::size_t pos_ = 0;
};

}  // namespace

const GlyphAtlas& GlyphAtlas::standard() {
  static const GlyphAtlas atlas = [] {
    GlyphAtlas a;
    for (const auto& art : kArt) a.add(from_art(art));
    return a;
  }();
  return atlas;
}

void GlyphAtlas::add(Glyph g) {
  if (g.parts.empty() || g.width < 1) throw InputError("glyph '" + g.token + "' has no ink");
  for (const auto& p : g.parts)
    if (p.rows() != kGlyphRows || p.cols() != g.width) throw ShapeError("glyph '" + g.token + "' part shape");
  std::string token = g.token;
  glyphs_[token] = std::move(g);
}

const Glyph& GlyphAtlas::glyph(const std::string& token) const {
  auto it = glyphs_.find(token);
  if (it == glyphs_.end()) throw RenderError("no glyph for '" + token + "'");
  return it->second;
}

std::vector<std::string> GlyphAtlas::glyph_tokens() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : glyphs_) out.push_back(k);
  return out;
}

const std::vector<std::string>& GlyphAtlas::layout_tokens() {
  static const std::vector<std::string> tokens{"^", "_", "{", "}", "\\frac", "\\,", "\\quad"};
  return tokens;
}

int GlyphAtlas::spacing_width(const std::string& token) {
  if (token == "\\,") return 3;
  if (token == "\\quad") return 14;
  return 0;
}

bool GlyphAtlas::renders(const std::string& token) const {
  const auto& l = layout_tokens();
  return has_glyph(token) || std::find(l.begin(), l.end(), token) != l.end();
}

Rendering render_tokens(const std::vector<Token>& tokens, const GlyphAtlas& atlas) {
  const Box box = Layout(tokens, atlas).run();
  Rendering out;
  const int height = box.ascent + box.descent;
  if (box.width == 0 || height == 0) {
    out.ink = Grid<bool>(0, 0);
    return out;
  }
  out.ink = Grid<bool>::Constant(height, box.width, false);
  for (const auto& p : box.pieces) {
    const int top = box.ascent + p.y;
    BoundingBox bb{height, -1, box.width, -1};
    auto paint = [&](int r, int c) {
      out.ink(r, c) = true;
      bb.top = std::min(bb.top, r);
      bb.bottom = std::max(bb.bottom, r);
      bb.left = std::min(bb.left, c);
      bb.right = std::max(bb.right, c);
    };
    if (p.stroke) {
      for (int r = 0; r < p.stroke->rows(); ++r)
        for (int c = 0; c < p.stroke->cols(); ++c)
          if ((*p.stroke)(r, c))
            for (int dr = 0; dr < p.scale; ++dr)
              for (int dc = 0; dc < p.scale; ++dc) paint(top + r * p.scale + dr, p.x + c * p.scale + dc);
    } else {
      for (int r = 0; r < p.bar_height; ++r)
        for (int c = 0; c < p.bar_width; ++c) paint(top + r, p.x + c);
    }
    if (bb.bottom >= 0) out.parts.push_back(InkPart{p.token, bb});
  }
  return out;
}

GrayImage to_gray_image(const Rendering& r, const RenderStyle& style, std::vector<BoundingBox>* part_boxes) {
  if (style.margin < 0) throw InputError("margin must be non-negative");
  const Eigen::Index h = r.ink.rows() + 2 * style.margin;
  const Eigen::Index w = r.ink.cols() + 2 * style.margin;
  if (h == 0 || w == 0) throw RenderError("nothing to draw");
  GrayImage img(h, w, 255);
  const int m = style.margin;
  auto ink_at = [&](Eigen::Index row, Eigen::Index col) {
    row -= m;
    col -= m;
    return row >= 0 && col >= 0 && row < r.ink.rows() && col < r.ink.cols() && r.ink(row, col);
  };
  for (Eigen::Index row = 0; row < h; ++row)
    for (Eigen::Index col = 0; col < w; ++col) {
      if (ink_at(row, col)) {
        img(row, col) = 0;
      } else if (style.halo) {
        if (ink_at(row - 1, col) || ink_at(row + 1, col) || ink_at(row, col - 1) || ink_at(row, col + 1))
          img(row, col) = 170;
        else if (ink_at(row - 1, col - 1) || ink_at(row - 1, col + 1) || ink_at(row + 1, col - 1) ||
                 ink_at(row + 1, col + 1))
          img(row, col) = 190;
      }
    }
  if (part_boxes) {
    part_boxes->clear();
    for (const auto& p : r.parts)
      part_boxes->push_back(BoundingBox{p.box.top + m, p.box.bottom + m, p.box.left + m, p.box.right + m});
  }
  return img;
}

}  // namespace mathrec
