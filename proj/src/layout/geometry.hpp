#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "figforge/layout.hpp"

namespace figforge::detail {

struct Point {
  double x;
  double y;
};

inline bool inside_shape(const LayoutNode& n, double px, double py, double inset = 0.0) {
  const Frame& f = n.frame;
  const double hw = f.w / 2 - inset;
  const double hh = f.h / 2 - inset;
  if (hw <= 0 || hh <= 0) return false;
  const double dx = px - f.cx();
  const double dy = py - f.cy();
  switch (n.shape) {
    case NodeShape::Ellipse: return (dx / hw) * (dx / hw) + (dy / hh) * (dy / hh) <= 1.0;
    case NodeShape::Diamond: return std::abs(dx) / hw + std::abs(dy) / hh <= 1.0;
    case NodeShape::Rounded: {
      if (std::abs(dx) > hw || std::abs(dy) > hh) return false;
      const double r = std::max(0.0, std::min({8.0 - inset, hw, hh}));
      const double ex = std::abs(dx) - (hw - r);
      const double ey = std::abs(dy) - (hh - r);
      if (ex <= 0 || ey <= 0) return true;
      return ex * ex + ey * ey <= r * r;
    }
    default: return std::abs(dx) <= hw && std::abs(dy) <= hh;
  }
}

// Where the ray from the node centre towards `toward` leaves the node shape.
inline Point border_point(const LayoutNode& n, Point toward) {
  const double cx = n.frame.cx();
  const double cy = n.frame.cy();
  const double dx = toward.x - cx;
  const double dy = toward.y - cy;
  const double hw = n.frame.w / 2;
  const double hh = n.frame.h / 2;
  if (dx == 0 && dy == 0) return {cx, cy};
  double t = 1.0;
  switch (n.shape) {
    case NodeShape::Ellipse: t = 1.0 / std::sqrt((dx / hw) * (dx / hw) + (dy / hh) * (dy / hh)); break;
    case NodeShape::Diamond: t = 1.0 / (std::abs(dx) / hw + std::abs(dy) / hh); break;
    default: {
      const double tx = dx == 0 ? std::numeric_limits<double>::infinity() : hw / std::abs(dx);
      const double ty = dy == 0 ? std::numeric_limits<double>::infinity() : hh / std::abs(dy);
      t = std::min(tx, ty);
    }
  }
  t = std::min(t, 1.0);
  return {cx + dx * t, cy + dy * t};
}

}  // namespace figforge::detail
