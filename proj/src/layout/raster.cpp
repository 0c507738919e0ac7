#include <algorithm>
#include <cmath>

#include "figforge/error.hpp"
#include "figforge/glyphs.hpp"
#include "figforge/layout.hpp"
#include "figforge/util.hpp"
#include "geometry.hpp"

namespace figforge {

namespace {

using detail::Point;

constexpr Rgb kNodeStroke{0x33, 0x33, 0x33};
constexpr Rgb kGroupStroke{0x99, 0x99, 0x99};
constexpr Rgb kEdgeStroke{0x55, 0x55, 0x55};
constexpr double kStrokeWidth = 1.5;
constexpr double kDash = 6.0;
constexpr double kGap = 4.0;
constexpr double kArrowLength = 10.0;
constexpr double kArrowHalfWidth = 3.5;
constexpr int kLabelPadding = 4;

struct Raster {
  Image& img;
  double scale;

  // Canvas-unit position of a pixel centre.
  Point centre(int px, int py) const { return {(px + 0.5) / scale, (py + 0.5) / scale}; }

  PixelBox pixel_bounds(double x0, double y0, double x1, double y1) const {
    const int l = std::max(0, static_cast<int>(std::floor(x0 * scale)) - 1);
    const int t = std::max(0, static_cast<int>(std::floor(y0 * scale)) - 1);
    const int r = std::min(img.width(), static_cast<int>(std::ceil(x1 * scale)) + 1);
    const int b = std::min(img.height(), static_cast<int>(std::ceil(y1 * scale)) + 1);
    return {l, t, std::max(0, r - l), std::max(0, b - t)};
  }

  PixelBox frame_pixels(const Frame& f) const {
    const int l = static_cast<int>(std::lround(f.x * scale));
    const int t = static_cast<int>(std::lround(f.y * scale));
    const int r = static_cast<int>(std::lround((f.x + f.w) * scale));
    const int b = static_cast<int>(std::lround((f.y + f.h) * scale));
    return {l, t, r - l, b - t};
  }

  // Stroke width in canvas units, never thinner than one pixel.
  double stroke() const { return std::max(kStrokeWidth, 1.0 / scale); }
};

bool on_dash(double along, double period_on, double period_off) {
  const double m = std::fmod(along, period_on + period_off);
  return m < period_on;
}

void draw_node(Raster& r, const LayoutNode& n) {
  const Frame& f = n.frame;
  const bool filled = n.fill != "none";
  const Rgb fill = filled ? parse_hex_color(n.fill) : kWhite;
  const bool group = n.shape == NodeShape::Group;
  const Rgb stroke_color = group ? kGroupStroke : kNodeStroke;
  const double sw = r.stroke();
  const PixelBox pb = r.pixel_bounds(f.x, f.y, f.x + f.w, f.y + f.h);
  for (int py = pb.y; py < pb.bottom(); ++py) {
    for (int px = pb.x; px < pb.right(); ++px) {
      const Point p = r.centre(px, py);
      if (!detail::inside_shape(n, p.x, p.y)) continue;
      const bool border = !detail::inside_shape(n, p.x, p.y, sw);
      if (border) {
        if (group) {
          // Dashes run along the perimeter, approximated per side.
          const bool horizontal_side = std::min(p.y - f.y, f.y + f.h - p.y) <= sw;
          const double along = horizontal_side ? p.x - f.x : p.y - f.y;
          if (!on_dash(along, kDash, kGap)) {
            if (filled) r.img.set(px, py, fill);
            continue;
          }
        }
        r.img.set(px, py, stroke_color);
      } else if (filled) {
        r.img.set(px, py, fill);
      }
    }
  }
}

void draw_node_label(Raster& r, const LayoutNode& n) {
  if (n.label.empty()) return;
  const Rgb background = n.fill != "none" ? parse_hex_color(n.fill) : kWhite;
  PixelBox box = r.frame_pixels(n.frame);
  if (n.shape == NodeShape::Group) {
    // Group titles sit in a strip along the top edge.
    const int strip = std::max(1, static_cast<int>(std::lround(18 * r.scale)));
    box.h = std::min(box.h, strip + 2 * kLabelPadding);
  }
  const int pad = kLabelPadding + static_cast<int>(std::ceil(r.stroke() * r.scale));
  box = {box.x + pad, box.y + pad, std::max(1, box.w - 2 * pad), std::max(1, box.h - 2 * pad)};
  if (n.shape == NodeShape::Ellipse || n.shape == NodeShape::Diamond) {
    // Keep text inside the inscribed rectangle.
    const double f = n.shape == NodeShape::Ellipse ? 1.0 / std::sqrt(2.0) : 0.5;
    const int w = static_cast<int>(box.w * f);
    const int h = static_cast<int>(box.h * f);
    box = {box.x + (box.w - w) / 2, box.y + (box.h - h) / 2, std::max(1, w), std::max(1, h)};
  }
  glyphs::draw(r.img, n.label, box, text_color_for(background));
}

void fill_segment(Raster& r, Point a, Point b, double half_width, bool dashed) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  const double len = std::sqrt(len2);
  const PixelBox pb = r.pixel_bounds(std::min(a.x, b.x) - half_width, std::min(a.y, b.y) - half_width,
                                     std::max(a.x, b.x) + half_width, std::max(a.y, b.y) + half_width);
  for (int py = pb.y; py < pb.bottom(); ++py) {
    for (int px = pb.x; px < pb.right(); ++px) {
      const Point p = r.centre(px, py);
      double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = p.x - (a.x + t * vx);
      const double dy = p.y - (a.y + t * vy);
      if (dx * dx + dy * dy > half_width * half_width) continue;
      if (dashed && !on_dash(t * len, kDash, kGap)) continue;
      r.img.set(px, py, kEdgeStroke);
    }
  }
}

void fill_arrowhead(Raster& r, Point tip, Point from) {
  const double vx = tip.x - from.x;
  const double vy = tip.y - from.y;
  const double len = std::hypot(vx, vy);
  if (len == 0) return;
  const double ux = vx / len;
  const double uy = vy / len;
  const double arrow = std::min(kArrowLength, len);
  const Point base{tip.x - ux * arrow, tip.y - uy * arrow};
  const Point p1{base.x - uy * kArrowHalfWidth, base.y + ux * kArrowHalfWidth};
  const Point p2{base.x + uy * kArrowHalfWidth, base.y - ux * kArrowHalfWidth};
  auto cross = [](Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  const PixelBox pb = r.pixel_bounds(std::min({tip.x, p1.x, p2.x}), std::min({tip.y, p1.y, p2.y}),
                                     std::max({tip.x, p1.x, p2.x}), std::max({tip.y, p1.y, p2.y}));
  for (int py = pb.y; py < pb.bottom(); ++py) {
    for (int px = pb.x; px < pb.right(); ++px) {
      const Point p = r.centre(px, py);
      const double c1 = cross(tip, p1, p);
      const double c2 = cross(p1, p2, p);
      const double c3 = cross(p2, tip, p);
      const bool neg = c1 < 0 || c2 < 0 || c3 < 0;
      const bool pos = c1 > 0 || c2 > 0 || c3 > 0;
      if (!(neg && pos)) r.img.set(px, py, kEdgeStroke);
    }
  }
}

struct EdgeGeometry {
  Point a;
  Point b;
};

EdgeGeometry edge_geometry(const LayoutGraph& g, const LayoutEdge& e) {
  const LayoutNode* s = g.find(e.source_id);
  const LayoutNode* t = g.find(e.target_id);
  return {detail::border_point(*s, {t->frame.cx(), t->frame.cy()}),
          detail::border_point(*t, {s->frame.cx(), s->frame.cy()})};
}

void draw_edge(Raster& r, const LayoutGraph& g, const LayoutEdge& e) {
  const auto [a, b] = edge_geometry(g, e);
  Point end = b;
  if (e.kind == EdgeKind::Arrow) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len > 0) {
      const double back = std::min(kArrowLength, len) * 0.5;
      end = {b.x - (b.x - a.x) / len * back, b.y - (b.y - a.y) / len * back};
    }
  }
  fill_segment(r, a, end, r.stroke() / 2, e.kind == EdgeKind::Dashed);
  if (e.kind == EdgeKind::Arrow) fill_arrowhead(r, b, a);
}

void draw_edge_label(Raster& r, const LayoutGraph& g, const LayoutEdge& e) {
  if (!e.label || normalize_whitespace(*e.label).empty()) return;
  const auto [a, b] = edge_geometry(g, e);
  const int k = std::max(1, static_cast<int>(std::floor(r.scale)));
  const int cols = static_cast<int>(glyphs::drawable(*e.label).size());
  const int w = cols * glyphs::kCellWidth * k + 2 * kLabelPadding;
  const int h = glyphs::kCellHeight * k + 2 * kLabelPadding;
  const int cx = static_cast<int>(std::lround((a.x + b.x) / 2 * r.scale));
  const int cy = static_cast<int>(std::lround((a.y + b.y) / 2 * r.scale));
  const PixelBox box{cx - w / 2, cy - h / 2, w, h};
  r.img.fill_box(box, kWhite);
  glyphs::draw(r.img, *e.label, {box.x + kLabelPadding, box.y + kLabelPadding, w - 2 * kLabelPadding,
                                 h - 2 * kLabelPadding},
               kBlack);
}

}  // namespace

std::pair<int, int> raster_size(const Canvas& canvas, double scale) {
  if (!(scale > 0)) throw PreconditionError("raster scale must be positive");
  const int w = static_cast<int>(std::lround(canvas.width * scale));
  const int h = static_cast<int>(std::lround(canvas.height * scale));
  return {std::max(1, w), std::max(1, h)};
}

Image render_layout(const LayoutGraph& graph, double scale) {
  validate_layout(graph);
  const auto [w, h] = raster_size(graph.canvas, scale);
  Image img(w, h, kWhite);
  Raster r{img, scale};
  // Groups first so members paint over them; shallow groups before nested.
  std::vector<const LayoutNode*> groups;
  for (const LayoutNode& n : graph.nodes) {
    if (n.shape == NodeShape::Group) groups.push_back(&n);
  }
  auto depth = [&](const LayoutNode* n) {
    int d = 0;
    while (n->group_id) {
      n = graph.find(*n->group_id);
      ++d;
    }
    return d;
  };
  std::stable_sort(groups.begin(), groups.end(),
                   [&](const LayoutNode* a, const LayoutNode* b) { return depth(a) < depth(b); });
  for (const LayoutNode* g : groups) {
    draw_node(r, *g);
    draw_node_label(r, *g);
  }
  for (const LayoutEdge& e : graph.edges) draw_edge(r, graph, e);
  for (const LayoutNode& n : graph.nodes) {
    if (n.shape == NodeShape::Group) continue;
    draw_node(r, n);
    draw_node_label(r, n);
  }
  for (const LayoutEdge& e : graph.edges) draw_edge_label(r, graph, e);
  return img;
}

Image rasterize(std::string_view markup, double scale) { return render_layout(parse_svg(markup), scale); }

}  // namespace figforge
