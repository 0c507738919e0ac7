#include "figforge/glyphs.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include "figforge/util.hpp"

namespace figforge::glyphs {

namespace {

constexpr char32_t kFirst = 32;
constexpr char32_t kLast = 126;

constexpr Glyph kGlyphs[kLast - kFirst + 1] = {
#include "font_glyphs.inc"
};

struct GlyphIndex {
  std::map<Glyph, char> by_pattern;
  std::set<int> left_bearings;
  std::set<int> top_bearings;
};

const GlyphIndex& index() {
  static const GlyphIndex idx = [] {
    GlyphIndex out;
    for (char32_t c = kFirst; c <= kLast; ++c) {
      const Glyph& g = kGlyphs[c - kFirst];
      out.by_pattern.emplace(g, static_cast<char>(c));
      int left = kCellWidth;
      int top = kCellHeight;
      for (int r = 0; r < kCellHeight; ++r) {
        for (int col = 0; col < kCellWidth; ++col) {
          if (glyph_bit(g, r, col)) {
            left = std::min(left, col);
            top = std::min(top, r);
          }
        }
      }
      if (left < kCellWidth) {
        out.left_bearings.insert(left);
        out.top_bearings.insert(top);
      }
    }
    return out;
  }();
  return idx;
}

}  // namespace

const Glyph& glyph_for(char32_t c) {
  if (c < kFirst || c > kLast) c = '?';
  return kGlyphs[c - kFirst];
}

bool glyph_bit(const Glyph& g, int row, int col) { return ((g[static_cast<std::size_t>(row)] >> (7 - col)) & 1) != 0; }

std::u32string drawable(std::string_view text) {
  std::u32string cps = is_valid_utf8(text) ? utf8_to_u32(text) : std::u32string(text.begin(), text.end());
  for (char32_t& c : cps) {
    if (c == '\t' || c == '\n' || c == '\r') {
      c = ' ';
    } else if (c < kFirst || c > kLast) {
      c = '?';
    }
  }
  return cps;
}

int fit_scale(std::string_view text, int box_w, int box_h) {
  const auto cols = static_cast<int>(drawable(text).size());
  int k = std::min(kMaxScale, box_h / kCellHeight);
  if (cols > 0) k = std::min(k, box_w / (kCellWidth * cols));
  return std::max(0, k);
}

Placement place(std::string_view text, const PixelBox& box) {
  Placement p;
  p.columns = static_cast<int>(drawable(text).size());
  p.scale = std::max(1, fit_scale(text, box.w, box.h));
  const int w = p.columns * kCellWidth * p.scale;
  const int h = kCellHeight * p.scale;
  p.x = w <= box.w ? box.x + (box.w - w) / 2 : box.x;
  p.y = h <= box.h ? box.y + (box.h - h) / 2 : box.y;
  return p;
}

Placement draw(Image& image, std::string_view text, const PixelBox& box, Rgb color) {
  const Placement p = place(text, box);
  const std::u32string chars = drawable(text);
  const int x_lo = std::max(0, box.x);
  const int y_lo = std::max(0, box.y);
  const int x_hi = std::min(image.width(), box.right());
  const int y_hi = std::min(image.height(), box.bottom());
  const int k = p.scale;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const Glyph& g = glyph_for(chars[i]);
    const int cell_x = p.x + static_cast<int>(i) * kCellWidth * k;
    if (cell_x >= x_hi) break;
    for (int r = 0; r < kCellHeight; ++r) {
      for (int c = 0; c < kCellWidth; ++c) {
        if (!glyph_bit(g, r, c)) continue;
        const int px0 = std::max(x_lo, cell_x + c * k);
        const int py0 = std::max(y_lo, p.y + r * k);
        const int px1 = std::min(x_hi, cell_x + (c + 1) * k);
        const int py1 = std::min(y_hi, p.y + (r + 1) * k);
        for (int y = py0; y < py1; ++y) {
          for (int x = px0; x < px1; ++x) image.set(x, y, color);
        }
      }
    }
  }
  return p;
}

namespace {

struct Component {
  int left, top, right, bottom;  // half-open
  long pixels = 0;
  int height() const { return bottom - top; }
  int width() const { return right - left; }
  bool solid() const { return pixels == static_cast<long>(width()) * height(); }
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Tries to read the group's ink as a line of glyphs at scale k with the
// first cell starting at (x0, y0). `ink` answers whether a pixel belongs to
// the group.
template <typename InkFn>
std::optional<std::string> read_cells(const InkFn& ink, int x0, int y0, int k, int columns) {
  std::string out;
  for (int i = 0; i < columns; ++i) {
    Glyph pattern{};
    const int cell_x = x0 + i * kCellWidth * k;
    for (int r = 0; r < kCellHeight; ++r) {
      for (int c = 0; c < kCellWidth; ++c) {
        const int bx = cell_x + c * k;
        const int by = y0 + r * k;
        const bool first = ink(bx, by);
        for (int y = by; y < by + k; ++y) {
          for (int x = bx; x < bx + k; ++x) {
            if (ink(x, y) != first) return std::nullopt;
          }
        }
        if (first) pattern[static_cast<std::size_t>(r)] |= static_cast<std::uint8_t>(1u << (7 - c));
      }
    }
    const auto& lookup = index().by_pattern;
    auto it = lookup.find(pattern);
    if (it == lookup.end()) return std::nullopt;
    out.push_back(it->second);
  }
  if (out.empty() || out.front() == ' ' || out.back() == ' ') return std::nullopt;
  return out;
}

}  // namespace

std::vector<DecodedText> decode(const Image& image, Rgb ink_color) {
  const int W = image.width();
  const int H = image.height();
  std::vector<int> label(static_cast<std::size_t>(W) * static_cast<std::size_t>(H), -1);
  auto at = [W](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(W) + static_cast<std::size_t>(x); };

  std::vector<Component> comps;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (label[at(x, y)] != -1 || image.at(x, y) != ink_color) continue;
      const int id = static_cast<int>(comps.size());
      Component comp{x, y, x + 1, y + 1};
      label[at(x, y)] = id;
      stack.push_back({x, y});
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        ++comp.pixels;
        comp.left = std::min(comp.left, cx);
        comp.top = std::min(comp.top, cy);
        comp.right = std::max(comp.right, cx + 1);
        comp.bottom = std::max(comp.bottom, cy + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
            if (label[at(nx, ny)] != -1 || image.at(nx, ny) != ink_color) continue;
            label[at(nx, ny)] = id;
            stack.push_back({nx, ny});
          }
        }
      }
      comps.push_back(comp);
    }
  }

  // Anything taller than the largest glyph cell is background, not text, and
  // so are solid blocks bigger than any glyph stroke (e.g. shape fills).
  std::vector<bool> usable(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Component& c = comps[i];
    const bool block = c.solid() && (c.width() > kCellWidth * kMaxScale || c.height() > kCellWidth * kMaxScale);
    usable[i] = c.height() <= kCellHeight * kMaxScale && !block;
    if (!usable[i]) continue;
    // Every run of a glyph drawn at scale k is a multiple of k, and the
    // component is no taller than a k-scaled cell. Regions that fail this
    // (a background patch next to a label, say) would spoil the line.
    const int id = static_cast<int>(i);
    int g = 0;
    for (int y = c.top; y < c.bottom; ++y) {
      int run = 0;
      for (int x = c.left; x <= c.right; ++x) {
        if (x < c.right && label[at(x, y)] == id) {
          ++run;
        } else if (run > 0) {
          g = std::gcd(g, run);
          run = 0;
        }
      }
    }
    for (int x = c.left; x < c.right; ++x) {
      int run = 0;
      for (int y = c.top; y <= c.bottom; ++y) {
        if (y < c.bottom && label[at(x, y)] == id) {
          ++run;
        } else if (run > 0) {
          g = std::gcd(g, run);
          run = 0;
        }
      }
    }
    usable[i] = c.height() <= kCellHeight * g;
  }

  UnionFind uf(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (!usable[i]) continue;
    for (std::size_t j = i + 1; j < comps.size(); ++j) {
      if (!usable[j]) continue;
      const Component& a = comps[i];
      const Component& b = comps[j];
      // Same text line: vertically overlapping or nearly so (underscores sit
      // below the baseline), and horizontally within about a word space.
      const int tallest = std::max(a.height(), b.height());
      const int v_gap = std::max(b.top - a.bottom, a.top - b.bottom);
      if (v_gap >= 0 && v_gap > 0.35 * tallest) continue;
      const int gap = std::max(b.left - a.right, a.left - b.right);
      if (gap <= 1.5 * tallest + 2) uf.unite(static_cast<int>(i), static_cast<int>(j));
    }
  }

  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (usable[i]) groups[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));
  }

  auto decode_group = [&](const std::vector<int>& members) -> std::optional<DecodedText> {
    Component box = comps[static_cast<std::size_t>(members.front())];
    std::set<int> member_set(members.begin(), members.end());
    for (int m : members) {
      const Component& c = comps[static_cast<std::size_t>(m)];
      box.left = std::min(box.left, c.left);
      box.top = std::min(box.top, c.top);
      box.right = std::max(box.right, c.right);
      box.bottom = std::max(box.bottom, c.bottom);
    }
    auto ink = [&](int x, int y) {
      if (x < 0 || y < 0 || x >= W || y >= H) return false;
      const int l = label[at(x, y)];
      return l != -1 && member_set.contains(l);
    };

    int run_gcd = 0;
    for (int y = box.top; y < box.bottom; ++y) {
      int run = 0;
      for (int x = box.left; x <= box.right; ++x) {
        if (x < box.right && ink(x, y)) {
          ++run;
        } else if (run > 0) {
          run_gcd = std::gcd(run_gcd, run);
          run = 0;
        }
      }
    }
    for (int x = box.left; x < box.right; ++x) {
      int run = 0;
      for (int y = box.top; y <= box.bottom; ++y) {
        if (y < box.bottom && ink(x, y)) {
          ++run;
        } else if (run > 0) {
          run_gcd = std::gcd(run_gcd, run);
          run = 0;
        }
      }
    }
    if (run_gcd == 0) return std::nullopt;

    for (int k = std::min(run_gcd, kMaxScale); k >= 1; --k) {
      if (run_gcd % k != 0) continue;
      for (int top_bearing : index().top_bearings) {
        const int y0 = box.top - top_bearing * k;
        if (y0 + kCellHeight * k < box.bottom) continue;
        for (int left_bearing : index().left_bearings) {
          const int x0 = box.left - left_bearing * k;
          const int cell_w = kCellWidth * k;
          const int columns = (box.right - x0 + cell_w - 1) / cell_w;
          if (auto text = read_cells(ink, x0, y0, k, columns)) {
            const int cx0 = std::max(0, x0);
            const int cy0 = std::max(0, y0);
            const int cx1 = std::min(W, x0 + columns * cell_w);
            const int cy1 = std::min(H, y0 + kCellHeight * k);
            return DecodedText{*text, {cx0, cy0, cx1 - cx0, cy1 - cy0}, k};
          }
        }
      }
    }
    return std::nullopt;
  };

  std::vector<DecodedText> out;
  for (const auto& [root, members] : groups) {
    if (auto d = decode_group(members)) out.push_back(std::move(*d));
  }
  std::sort(out.begin(), out.end(), [](const DecodedText& a, const DecodedText& b) {
    return std::tie(a.cell_box.y, a.cell_box.x) < std::tie(b.cell_box.y, b.cell_box.x);
  });
  return out;
}

}  // namespace figforge::glyphs
