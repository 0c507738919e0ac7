#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace figforge {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend auto operator<=>(const Rgb&, const Rgb&) = default;

  // Relative luminance in [0,1] (sRGB transfer removed).
  double luminance() const;
  std::string hex() const;
};

Rgb parse_hex_color(const std::string& text);

inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kWhite{255, 255, 255};

// Axis-aligned pixel box, origin top-left.
struct PixelBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool contains(int px, int py) const { return px >= x && py >= y && px < x + w && py < y + h; }
  bool intersects(const PixelBox& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
};

// 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = kWhite);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  bool in_bounds(const PixelBox& box) const {
    return box.w > 0 && box.h > 0 && box.x >= 0 && box.y >= 0 && box.right() <= width_ &&
           box.bottom() <= height_;
  }

  Rgb at(int x, int y) const {
    const auto* p = &data_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &data_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void fill_box(const PixelBox& box, Rgb c);

  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Nearest-neighbour scale into target size preserving aspect ratio; the
// remainder is padded with `pad` and the content centred.
Image resize_letterbox(const Image& src, int target_w, int target_h, Rgb pad = kWhite);

// PNG codec. Encoding is deterministic: no timestamps, fixed filter and level.
std::string encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);
Image decode_png(const std::string& bytes);
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

}  // namespace figforge
