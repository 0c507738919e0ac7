#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "figforge/image.hpp"
#include "figforge/ingest.hpp"

namespace figforge {

enum class NodeShape { Rect, Rounded, Ellipse, Diamond, Group };
std::string_view to_string(NodeShape s);
NodeShape node_shape_from_string(std::string_view s);

enum class EdgeKind { Arrow, Line, Dashed };
std::string_view to_string(EdgeKind k);
EdgeKind edge_kind_from_string(std::string_view s);

// Rectangle in abstract canvas units.
struct Frame {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct LayoutNode {
  std::string id;
  std::string label;
  NodeShape shape = NodeShape::Rect;
  Frame frame;
  std::string fill = "#ffffff";  // "#rrggbb" or "none"
  std::optional<std::string> group_id;

  friend bool operator==(const LayoutNode&, const LayoutNode&) = default;
};

struct LayoutEdge {
  std::string source_id;
  std::string target_id;
  std::optional<std::string> label;
  EdgeKind kind = EdgeKind::Arrow;

  friend bool operator==(const LayoutEdge&, const LayoutEdge&) = default;
};

struct Canvas {
  double width = 800;
  double height = 450;
  friend bool operator==(const Canvas&, const Canvas&) = default;
};

// Directed graph with geometry: the symbolic blueprint of a figure.
struct LayoutGraph {
  std::vector<LayoutNode> nodes;
  std::vector<LayoutEdge> edges;
  Canvas canvas;

  const LayoutNode* find(std::string_view id) const;
  friend bool operator==(const LayoutGraph&, const LayoutGraph&) = default;
};

// Throws InvalidLayout on duplicate ids, dangling edges, frames that are
// empty or leave the canvas, unknown or non-group parents, and cyclic group
// membership.
void validate_layout(const LayoutGraph& graph);

inline constexpr std::string_view kDefaultStyle =
    "Delicate and cute cartoon comic style, using Morandi color palette";

struct StyleDescriptor {
  std::string style_text{kDefaultStyle};
  std::vector<std::string> palette_hint;
  Category category = Category::Paper;

  friend bool operator==(const StyleDescriptor&, const StyleDescriptor&) = default;
};

struct LayoutMetrics {
  double overlap_area = 0;         // canvas units squared
  double alignment_deviation = 0;  // canvas units
  double balance = 1;              // [0,1]
};

// Guides closer than this (canvas units) are merged.
inline constexpr double kAlignmentTolerance = 2.0;

LayoutMetrics measure(const LayoutGraph& graph);

using LabelMultiset = std::multiset<std::string>;

// Node and edge labels, whitespace-normalized. Empty labels are skipped.
LabelMultiset extract_labels(const LayoutGraph& graph);

// --- markup ------------------------------------------------------------

// Canonical SVG for the supported subset: fixed attribute order, two
// decimals, one <g data-id> per node and one <path> per edge.
std::string serialize_svg(const LayoutGraph& graph, const StyleDescriptor& style);

struct ParsedSvg {
  LayoutGraph graph;
  std::optional<StyleDescriptor> style;  // present when the root carries data-style
};

// Errors: UnsupportedElement, MalformedMarkup.
ParsedSvg parse_svg_document(std::string_view markup);
LayoutGraph parse_svg(std::string_view markup);

// --- raster ------------------------------------------------------------

// Pixel size of a canvas at `scale`, rounded to the nearest integer.
std::pair<int, int> raster_size(const Canvas& canvas, double scale);
Image render_layout(const LayoutGraph& graph, double scale);
// Parses then renders. Deterministic for identical markup and scale.
Image rasterize(std::string_view markup, double scale);

// Text colour for a background: light text when luminance is below 0.5.
Rgb text_color_for(Rgb background);

}  // namespace figforge
