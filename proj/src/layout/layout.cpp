#include "figforge/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "figforge/error.hpp"
#include "figforge/util.hpp"

namespace figforge {

std::string_view to_string(NodeShape s) {
  switch (s) {
    case NodeShape::Rect: return "rect";
    case NodeShape::Rounded: return "rounded";
    case NodeShape::Ellipse: return "ellipse";
    case NodeShape::Diamond: return "diamond";
    case NodeShape::Group: return "group";
  }
  return "rect";
}

NodeShape node_shape_from_string(std::string_view s) {
  for (NodeShape v : {NodeShape::Rect, NodeShape::Rounded, NodeShape::Ellipse, NodeShape::Diamond, NodeShape::Group}) {
    if (to_string(v) == s) return v;
  }
  throw MalformedMarkup("unknown node shape '" + std::string(s) + "'");
}

std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Arrow: return "arrow";
    case EdgeKind::Line: return "line";
    case EdgeKind::Dashed: return "dashed";
  }
  return "arrow";
}

EdgeKind edge_kind_from_string(std::string_view s) {
  for (EdgeKind v : {EdgeKind::Arrow, EdgeKind::Line, EdgeKind::Dashed}) {
    if (to_string(v) == s) return v;
  }
  throw MalformedMarkup("unknown edge kind '" + std::string(s) + "'");
}

const LayoutNode* LayoutGraph::find(std::string_view id) const {
  for (const LayoutNode& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

void validate_layout(const LayoutGraph& graph) {
  if (!(graph.canvas.width > 0) || !(graph.canvas.height > 0)) throw InvalidLayout("canvas must have positive size");
  std::map<std::string, const LayoutNode*> by_id;
  for (const LayoutNode& n : graph.nodes) {
    if (n.id.empty()) throw InvalidLayout("node with empty id");
    if (!by_id.emplace(n.id, &n).second) throw InvalidLayout("duplicate node id '" + n.id + "'");
    const Frame& f = n.frame;
    if (!(f.w > 0) || !(f.h > 0)) throw InvalidLayout("node '" + n.id + "' has an empty frame");
    if (f.x < 0 || f.y < 0 || f.x + f.w > graph.canvas.width + 1e-9 || f.y + f.h > graph.canvas.height + 1e-9) {
      throw InvalidLayout("node '" + n.id + "' lies outside the canvas");
    }
    if (n.fill != "none") {
      try {
        parse_hex_color(n.fill);
      } catch (const Error&) {
        throw InvalidLayout("node '" + n.id + "' has an invalid fill '" + n.fill + "'");
      }
    }
  }
  for (const LayoutNode& n : graph.nodes) {
    if (!n.group_id) continue;
    auto it = by_id.find(*n.group_id);
    if (it == by_id.end()) throw InvalidLayout("node '" + n.id + "' references unknown group '" + *n.group_id + "'");
    if (it->second->shape != NodeShape::Group) {
      throw InvalidLayout("node '" + n.id + "' has parent '" + *n.group_id + "' which is not a group");
    }
    // Walk up; more steps than nodes means a cycle.
    const LayoutNode* cur = &n;
    std::size_t steps = 0;
    while (cur->group_id) {
      if (++steps > graph.nodes.size()) throw InvalidLayout("group membership of '" + n.id + "' is cyclic");
      auto parent = by_id.find(*cur->group_id);
      if (parent == by_id.end()) break;
      cur = parent->second;
      if (cur == &n) throw InvalidLayout("group membership of '" + n.id + "' is cyclic");
    }
  }
  for (const LayoutEdge& e : graph.edges) {
    if (!by_id.contains(e.source_id)) throw InvalidLayout("edge source '" + e.source_id + "' is not a node");
    if (!by_id.contains(e.target_id)) throw InvalidLayout("edge target '" + e.target_id + "' is not a node");
  }
}

namespace {

double intersection_area(const Frame& a, const Frame& b) {
  const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

struct EdgeCoord {
  double value;
  std::size_t node;
};

// Mean distance from each coordinate to the nearest guide shared by at least
// two nodes. With no shared guide on this axis, the nearest coordinate of
// another node stands in for it.
double axis_deviation(std::vector<EdgeCoord> coords, std::size_t node_count) {
  if (coords.empty() || node_count < 2) return 0.0;
  std::sort(coords.begin(), coords.end(), [](const EdgeCoord& a, const EdgeCoord& b) {
    return a.value < b.value || (a.value == b.value && a.node < b.node);
  });
  std::vector<double> shared_guides;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= coords.size(); ++i) {
    if (i == coords.size() || coords[i].value - coords[i - 1].value > kAlignmentTolerance) {
      std::set<std::size_t> owners;
      double sum = 0;
      for (std::size_t j = start; j < i; ++j) {
        owners.insert(coords[j].node);
        sum += coords[j].value;
      }
      if (owners.size() >= 2) shared_guides.push_back(sum / static_cast<double>(i - start));
      start = i;
    }
  }
  double total = 0;
  for (const EdgeCoord& c : coords) {
    double best = std::numeric_limits<double>::infinity();
    if (!shared_guides.empty()) {
      for (double g : shared_guides) best = std::min(best, std::abs(c.value - g));
    } else {
      for (const EdgeCoord& o : coords) {
        if (o.node != c.node) best = std::min(best, std::abs(c.value - o.value));
      }
    }
    total += best;
  }
  return total / static_cast<double>(coords.size());
}

}  // namespace

LayoutMetrics measure(const LayoutGraph& graph) {
  LayoutMetrics m;
  // Group nodes are containers; their area is not counted as overlap.
  std::vector<const LayoutNode*> boxes;
  for (const LayoutNode& n : graph.nodes) {
    if (n.shape != NodeShape::Group) boxes.push_back(&n);
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) m.overlap_area += intersection_area(boxes[i]->frame, boxes[j]->frame);
  }

  std::vector<EdgeCoord> xs;
  std::vector<EdgeCoord> ys;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Frame& f = boxes[i]->frame;
    xs.push_back({f.x, i});
    xs.push_back({f.x + f.w, i});
    ys.push_back({f.y, i});
    ys.push_back({f.y + f.h, i});
  }
  const double dx = axis_deviation(xs, boxes.size());
  const double dy = axis_deviation(ys, boxes.size());
  m.alignment_deviation = boxes.size() < 2 ? 0.0 : (dx + dy) / 2.0;

  double area = 0;
  double cx = 0;
  double cy = 0;
  for (const LayoutNode* n : boxes) {
    const double a = n->frame.w * n->frame.h;
    area += a;
    cx += a * n->frame.cx();
    cy += a * n->frame.cy();
  }
  if (area > 0) {
    cx /= area;
    cy /= area;
    const double half_w = graph.canvas.width / 2;
    const double half_h = graph.canvas.height / 2;
    const double offset = std::hypot(cx - half_w, cy - half_h);
    const double half_diag = std::hypot(half_w, half_h);
    m.balance = std::clamp(1.0 - offset / half_diag, 0.0, 1.0);
  }
  return m;
}

LabelMultiset extract_labels(const LayoutGraph& graph) {
  LabelMultiset out;
  for (const LayoutNode& n : graph.nodes) {
    std::string l = normalize_whitespace(n.label);
    if (!l.empty()) out.insert(std::move(l));
  }
  for (const LayoutEdge& e : graph.edges) {
    if (!e.label) continue;
    std::string l = normalize_whitespace(*e.label);
    if (!l.empty()) out.insert(std::move(l));
  }
  return out;
}

Rgb text_color_for(Rgb background) { return background.luminance() < 0.5 ? kWhite : kBlack; }

}  // namespace figforge
