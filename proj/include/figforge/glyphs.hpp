#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "figforge/image.hpp"

// Embedded monospace bitmap font used for all blueprint and overlay text.
// Glyphs are scaled by integer factors only, so rendering is exact and the
// template decoder below can invert it.
namespace figforge::glyphs {

inline constexpr int kCellWidth = 8;
inline constexpr int kCellHeight = 14;
inline constexpr int kMaxScale = 12;

using Glyph = std::array<std::uint8_t, kCellHeight>;

// Printable ASCII maps to itself; anything else renders as '?'.
const Glyph& glyph_for(char32_t c);
bool glyph_bit(const Glyph& g, int row, int col);

// Characters drawn for `text` (code points mapped into the font's range).
std::u32string drawable(std::string_view text);

// Largest integer scale at which `text` fits in a w x h box; 0 if none does.
int fit_scale(std::string_view text, int box_w, int box_h);

struct Placement {
  int x = 0;
  int y = 0;
  int scale = 1;
  int columns = 0;

  PixelBox box() const { return {x, y, columns * kCellWidth * scale, kCellHeight * scale}; }
};

// Centres `text` in `box` at the largest fitting scale (at least 1).
Placement place(std::string_view text, const PixelBox& box);

// Draws `text` into `box`; ink never lands outside `box` or the image.
Placement draw(Image& image, std::string_view text, const PixelBox& box, Rgb color);

struct DecodedText {
  std::string text;
  PixelBox cell_box;  // the full character-cell rectangle, clipped to the image
  int scale = 1;
};

// Finds runs of text drawn with `ink` by `draw` and recovers their strings by
// exact template matching. Regions that do not decode cleanly are skipped.
std::vector<DecodedText> decode(const Image& image, Rgb ink);

}  // namespace figforge::glyphs
