#include "figforge/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "figforge/error.hpp"

namespace figforge {

namespace {

double linearize(std::uint8_t channel) {
  const double c = channel / 255.0;
  return c <= 0.03928 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

double Rgb::luminance() const {
  return 0.2126 * linearize(r) + 0.7152 * linearize(g) + 0.0722 * linearize(b);
}

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

Rgb parse_hex_color(const std::string& text) {
  if (text == "black") return kBlack;
  if (text == "white") return kWhite;
  if (text.empty() || text[0] != '#' || (text.size() != 4 && text.size() != 7)) {
    throw MalformedMarkup("unsupported color '" + text + "'");
  }
  std::array<int, 6> d{};
  const bool short_form = text.size() == 4;
  for (std::size_t i = 1; i < text.size(); ++i) {
    const int v = hex_digit(text[i]);
    if (v < 0) throw MalformedMarkup("unsupported color '" + text + "'");
    if (short_form) {
      d[(i - 1) * 2] = v;
      d[(i - 1) * 2 + 1] = v;
    } else {
      d[i - 1] = v;
    }
  }
  return {static_cast<std::uint8_t>(d[0] * 16 + d[1]), static_cast<std::uint8_t>(d[2] * 16 + d[3]),
          static_cast<std::uint8_t>(d[4] * 16 + d[5])};
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw PreconditionError("negative image dimensions");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

void Image::fill_box(const PixelBox& box, Rgb c) {
  const int x0 = std::max(0, box.x);
  const int y0 = std::max(0, box.y);
  const int x1 = std::min(width_, box.right());
  const int y1 = std::min(height_, box.bottom());
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

Image resize_letterbox(const Image& src, int target_w, int target_h, Rgb pad) {
  if (target_w <= 0 || target_h <= 0) throw PreconditionError("target size must be positive");
  Image out(target_w, target_h, pad);
  if (src.empty()) return out;
  const double scale =
      std::min(static_cast<double>(target_w) / src.width(), static_cast<double>(target_h) / src.height());
  const int w = std::clamp(static_cast<int>(std::lround(src.width() * scale)), 1, target_w);
  const int h = std::clamp(static_cast<int>(std::lround(src.height() * scale)), 1, target_h);
  const int ox = (target_w - w) / 2;
  const int oy = (target_h - h) / 2;
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(src.height() - 1, static_cast<int>(y * static_cast<long long>(src.height()) / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(src.width() - 1, static_cast<int>(x * static_cast<long long>(src.width()) / w));
      out.set(ox + x, oy + y, src.at(sx, sy));
    }
  }
  return out;
}

}  // namespace figforge
