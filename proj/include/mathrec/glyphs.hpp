#pragma once

#include <map>
#include <string>
#include <vector>

#include "mathrec/image.hpp"
#include "mathrec/segmentation.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec {

inline constexpr int kGlyphRows = 7;

/// A 7-row bitmap glyph split into its separately drawn strokes ('=' has two).
struct Glyph {
  std::string token;
  int width = 0;
  std::vector<Grid<bool>> parts;  // each kGlyphRows x width
};

/// Bitmap font plus the layout vocabulary (scripts, fractions, grouping, spacing).
class GlyphAtlas {
 public:
  static const GlyphAtlas& standard();

  bool has_glyph(const std::string& token) const { return glyphs_.count(token) > 0; }
  const Glyph& glyph(const std::string& token) const;
  std::vector<std::string> glyph_tokens() const;
  static const std::vector<std::string>& layout_tokens();
  /// Blank width in pixels for spacing commands, 0 when `token` is not one.
  static int spacing_width(const std::string& token);
  bool renders(const std::string& token) const;

  void add(Glyph g);

 private:
  std::map<std::string, Glyph> glyphs_;
};

/// One separately drawn stroke with its tight ink box.
struct InkPart {
  std::string token;
  BoundingBox box;
};

struct Rendering {
  Grid<bool> ink;  // height x width, may be 0 x 0 for empty input
  std::vector<InkPart> parts;
};

/// Deterministic layout of a token sequence. Base glyphs are drawn at 2x, scripts at 1x.
/// Throws RenderError for unknown tokens or malformed structure.
Rendering render_tokens(const std::vector<Token>& tokens, const GlyphAtlas& atlas = GlyphAtlas::standard());

struct RenderStyle {
  int margin = 4;
  bool halo = true;  // soft 170/190 fringe around ink, mimicking anti-aliasing
};

/// Gray page: ink 0, optional fringe, background 255. Part boxes are shifted by the margin.
GrayImage to_gray_image(const Rendering& r, const RenderStyle& style, std::vector<BoundingBox>* part_boxes = nullptr);

}  // namespace mathrec
