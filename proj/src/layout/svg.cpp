#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <variant>

#include "figforge/error.hpp"
#include "figforge/layout.hpp"
#include "figforge/util.hpp"
#include "geometry.hpp"

namespace figforge {

namespace {

using detail::Point;
using detail::border_point;

// ---------------------------------------------------------------------------
// Minimal XML reader: elements, attributes, text, comments, CDATA and the
// predefined/numeric entities. No DTD processing.

struct XmlElement {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<std::variant<XmlElement, std::string>> children;

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attributes) {
      if (k == key) return &v;
    }
    return nullptr;
  }
  std::string text() const {
    std::string out;
    for (const auto& c : children) {
      if (const auto* s = std::get_if<std::string>(&c)) out += *s;
    }
    return out;
  }
};

class XmlReader {
 public:
  explicit XmlReader(std::string_view src) : s_(src) {}

  XmlElement parse_document() {
    if (s_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
    skip_misc();
    if (!peek('<')) fail("expected root element");
    XmlElement root = parse_element();
    skip_misc();
    if (pos_ != s_.size()) fail("trailing content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedMarkup(what + " at offset " + std::to_string(pos_));
  }
  bool peek(char c) const { return pos_ < s_.size() && s_[pos_] == c; }
  bool starts(std::string_view t) const { return s_.substr(pos_).starts_with(t); }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void skip_until(std::string_view end) {
    const auto p = s_.find(end, pos_);
    if (p == std::string_view::npos) fail("unterminated construct, expected '" + std::string(end) + "'");
    pos_ = p + end.size();
  }
  void skip_misc() {
    while (true) {
      skip_ws();
      if (starts("<?")) {
        skip_until("?>");
      } else if (starts("<!--")) {
        skip_until("-->");
      } else if (starts("<!DOCTYPE") || starts("<!doctype")) {
        if (s_.find('[', pos_) < s_.find('>', pos_)) fail("DOCTYPE internal subsets are not supported");
        skip_until(">");
      } else {
        return;
      }
    }
  }

  std::string parse_name() {
    const std::size_t start = pos_;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' || c == '.') {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string decode_entities(std::string_view raw) const {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out.push_back(raw[i]);
        continue;
      }
      const auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) throw MalformedMarkup("unterminated entity reference");
      const std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") {
        out.push_back('&');
      } else if (ent == "lt") {
        out.push_back('<');
      } else if (ent == "gt") {
        out.push_back('>');
      } else if (ent == "quot") {
        out.push_back('"');
      } else if (ent == "apos") {
        out.push_back('\'');
      } else if (ent.starts_with("#")) {
        const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
        const std::string digits(ent.substr(hex ? 2 : 1));
        if (digits.empty()) throw MalformedMarkup("empty character reference");
        std::size_t used = 0;
        unsigned long cp = 0;
        try {
          cp = std::stoul(digits, &used, hex ? 16 : 10);
        } catch (const std::exception&) {
          throw MalformedMarkup("bad character reference '&" + std::string(ent) + ";'");
        }
        if (used != digits.size() || cp > 0x10FFFF) throw MalformedMarkup("bad character reference");
        out += u32_to_utf8(std::u32string(1, static_cast<char32_t>(cp)));
      } else {
        throw MalformedMarkup("unknown entity '&" + std::string(ent) + ";'");
      }
      i = semi;
    }
    return out;
  }

  XmlElement parse_element() {
    ++pos_;  // '<'
    XmlElement el;
    el.name = parse_name();
    while (true) {
      skip_ws();
      if (starts("/>")) {
        pos_ += 2;
        return el;
      }
      if (peek('>')) {
        ++pos_;
        break;
      }
      std::string key = parse_name();
      skip_ws();
      if (!peek('=')) fail("expected '=' after attribute " + key);
      ++pos_;
      skip_ws();
      if (!peek('"') && !peek('\'')) fail("expected quoted value for attribute " + key);
      const char q = s_[pos_++];
      const auto end = s_.find(q, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value");
      el.attributes.emplace_back(std::move(key), decode_entities(s_.substr(pos_, end - pos_)));
      pos_ = end + 1;
    }
    // Content.
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated element <" + el.name + ">");
      if (starts("</")) {
        pos_ += 2;
        const std::string closing = parse_name();
        if (closing != el.name) fail("mismatched </" + closing + "> for <" + el.name + ">");
        skip_ws();
        if (!peek('>')) fail("expected '>'");
        ++pos_;
        return el;
      }
      if (starts("<!--")) {
        skip_until("-->");
      } else if (starts("<![CDATA[")) {
        pos_ += 9;
        const auto end = s_.find("]]>", pos_);
        if (end == std::string_view::npos) fail("unterminated CDATA");
        el.children.emplace_back(std::string(s_.substr(pos_, end - pos_)));
        pos_ = end + 3;
      } else if (peek('<')) {
        el.children.emplace_back(parse_element());
      } else {
        const auto end = s_.find('<', pos_);
        const std::size_t stop = end == std::string_view::npos ? s_.size() : end;
        el.children.emplace_back(decode_entities(s_.substr(pos_, stop - pos_)));
        pos_ = stop;
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------

const std::set<std::string, std::less<>> kSupportedElements = {"svg",     "defs", "marker", "g",   "rect",
                                                               "ellipse", "polygon", "path", "text"};

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          out += "&#" + std::to_string(static_cast<int>(c)) + ";";
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

std::string diamond_points(const Frame& f) {
  return num(f.cx()) + "," + num(f.y) + " " + num(f.x + f.w) + "," + num(f.cy()) + " " + num(f.cx()) + "," +
         num(f.y + f.h) + " " + num(f.x) + "," + num(f.cy());
}

double parse_number(const std::string* s, const char* what) {
  if (s == nullptr) throw MalformedMarkup(std::string("missing attribute ") + what);
  std::string t = trim(*s);
  if (t.ends_with("px")) t.resize(t.size() - 2);
  auto v = parse_double(t);
  if (!v) throw MalformedMarkup(std::string("attribute ") + what + " is not a number: '" + *s + "'");
  return *v;
}

std::vector<double> parse_number_list(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::vector<double> out;
  for (const auto& tok : split_whitespace(t)) {
    auto v = parse_double(tok);
    if (!v) throw MalformedMarkup("bad number '" + tok + "' in list");
    out.push_back(*v);
  }
  return out;
}

std::string canonical_fill(const std::string* fill) {
  if (fill == nullptr) return "#000000";  // SVG default
  const std::string f = trim(*fill);
  if (f == "none") return "none";
  return parse_hex_color(f).hex();
}

// Geometry of a shape element, or nullopt for non-shape elements.
std::optional<std::pair<NodeShape, Frame>> shape_of(const XmlElement& el) {
  if (el.name == "rect") {
    Frame f;
    f.x = el.attr("x") ? parse_number(el.attr("x"), "x") : 0.0;
    f.y = el.attr("y") ? parse_number(el.attr("y"), "y") : 0.0;
    f.w = parse_number(el.attr("width"), "width");
    f.h = parse_number(el.attr("height"), "height");
    const bool rounded = el.attr("rx") && parse_number(el.attr("rx"), "rx") > 0;
    return std::make_pair(rounded ? NodeShape::Rounded : NodeShape::Rect, f);
  }
  if (el.name == "ellipse") {
    const double cx = parse_number(el.attr("cx"), "cx");
    const double cy = parse_number(el.attr("cy"), "cy");
    const double rx = parse_number(el.attr("rx"), "rx");
    const double ry = parse_number(el.attr("ry"), "ry");
    return std::make_pair(NodeShape::Ellipse, Frame{cx - rx, cy - ry, 2 * rx, 2 * ry});
  }
  if (el.name == "polygon") {
    const std::string* pts = el.attr("points");
    if (pts == nullptr) throw MalformedMarkup("polygon without points");
    const auto v = parse_number_list(*pts);
    if (v.size() < 6 || v.size() % 2 != 0) throw MalformedMarkup("polygon needs at least three points");
    double x0 = v[0], x1 = v[0], y0 = v[1], y1 = v[1];
    for (std::size_t i = 0; i < v.size(); i += 2) {
      x0 = std::min(x0, v[i]);
      x1 = std::max(x1, v[i]);
      y0 = std::min(y0, v[i + 1]);
      y1 = std::max(y1, v[i + 1]);
    }
    return std::make_pair(NodeShape::Diamond, Frame{x0, y0, x1 - x0, y1 - y0});
  }
  return std::nullopt;
}

void check_subset(const XmlElement& el) {
  if (!kSupportedElements.contains(el.name)) throw UnsupportedElement("element <" + el.name + "> is outside the supported SVG subset");
  for (const auto& c : el.children) {
    if (const auto* child = std::get_if<XmlElement>(&c)) check_subset(*child);
  }
}

struct ParseContext {
  LayoutGraph graph;
  std::vector<std::pair<std::size_t, std::string>> edge_labels;  // (edge index, text)
  std::vector<std::pair<Point, std::string>> free_texts;
  std::set<std::string> ids;

  std::string fresh_id() {
    std::size_t k = graph.nodes.size();
    std::string id;
    do {
      id = "n" + std::to_string(k++);
    } while (ids.contains(id));
    return id;
  }
};

void walk(const XmlElement& el, ParseContext& ctx);

void add_node_group(const XmlElement& g, ParseContext& ctx) {
  LayoutNode node;
  node.id = *g.attr("data-id");
  std::optional<std::pair<NodeShape, Frame>> geometry;
  std::string child_fill;
  bool label_found = false;
  for (const auto& c : g.children) {
    const auto* child = std::get_if<XmlElement>(&c);
    if (child == nullptr) continue;
    if (child->name == "text") {
      if (!label_found) {
        node.label = child->text();
        label_found = true;
      }
    } else if (auto geo = shape_of(*child); geo && !geometry) {
      geometry = geo;
      child_fill = canonical_fill(child->attr("fill"));
    } else if (child->name == "g" || child->name == "path") {
      walk(*child, ctx);
    }
  }
  if (const auto* shape = g.attr("data-shape")) {
    node.shape = node_shape_from_string(*shape);
  } else if (geometry) {
    node.shape = geometry->first;
  }
  if (const auto* frame = g.attr("data-frame")) {
    const auto v = parse_number_list(*frame);
    if (v.size() != 4) throw MalformedMarkup("data-frame needs four numbers");
    node.frame = {v[0], v[1], v[2], v[3]};
  } else if (geometry) {
    node.frame = geometry->second;
  } else {
    throw MalformedMarkup("node '" + node.id + "' has no geometry");
  }
  if (const auto* fill = g.attr("data-fill")) {
    node.fill = canonical_fill(fill);
  } else if (geometry) {
    node.fill = child_fill;
  }
  if (const auto* group = g.attr("data-group")) node.group_id = *group;
  if (!ctx.ids.insert(node.id).second) throw MalformedMarkup("duplicate data-id '" + node.id + "'");
  ctx.graph.nodes.push_back(std::move(node));
}

void walk(const XmlElement& el, ParseContext& ctx) {
  if (el.name == "defs") return;
  if (el.name == "g") {
    if (el.attr("data-id")) {
      add_node_group(el, ctx);
      return;
    }
    for (const auto& c : el.children) {
      if (const auto* child = std::get_if<XmlElement>(&c)) walk(*child, ctx);
    }
    return;
  }
  if (el.name == "path") {
    const auto* source = el.attr("data-source");
    const auto* target = el.attr("data-target");
    if (source == nullptr || target == nullptr) return;  // decorative
    LayoutEdge edge;
    edge.source_id = *source;
    edge.target_id = *target;
    if (const auto* kind = el.attr("data-edge")) {
      edge.kind = edge_kind_from_string(*kind);
    } else if (el.attr("stroke-dasharray")) {
      edge.kind = EdgeKind::Dashed;
    } else {
      edge.kind = el.attr("marker-end") ? EdgeKind::Arrow : EdgeKind::Line;
    }
    ctx.graph.edges.push_back(std::move(edge));
    return;
  }
  if (el.name == "text") {
    if (const auto* of = el.attr("data-label-of")) {
      const double idx = parse_number(of, "data-label-of");
      ctx.edge_labels.emplace_back(static_cast<std::size_t>(idx), el.text());
    } else {
      const double x = el.attr("x") ? parse_number(el.attr("x"), "x") : 0.0;
      const double y = el.attr("y") ? parse_number(el.attr("y"), "y") : 0.0;
      ctx.free_texts.emplace_back(Point{x, y}, normalize_whitespace(el.text()));
    }
    return;
  }
  if (auto geo = shape_of(el)) {
    LayoutNode node;
    node.id = ctx.fresh_id();
    node.shape = geo->first;
    node.frame = geo->second;
    node.fill = canonical_fill(el.attr("fill"));
    ctx.ids.insert(node.id);
    ctx.graph.nodes.push_back(std::move(node));
  }
}

}  // namespace

std::string serialize_svg(const LayoutGraph& graph, const StyleDescriptor& style) {
  validate_layout(graph);
  std::ostringstream out;
  const std::string w = num(graph.canvas.width);
  const std::string h = num(graph.canvas.height);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << " " << h << "\" data-category=\"" << to_string(style.category) << "\" data-style=\""
      << escape_xml(style.style_text) << "\"";
  if (!style.palette_hint.empty()) {
    std::string palette;
    for (const auto& c : style.palette_hint) palette += (palette.empty() ? "" : ",") + c;
    out << " data-palette=\"" << escape_xml(palette) << "\"";
  }
  out << ">\n";
  const bool any_arrow = std::any_of(graph.edges.begin(), graph.edges.end(),
                                     [](const LayoutEdge& e) { return e.kind == EdgeKind::Arrow; });
  if (any_arrow) {
    out << "<defs><marker id=\"arrowhead\" markerWidth=\"10\" markerHeight=\"7\" refX=\"10\" refY=\"3.50\" "
           "orient=\"auto\"><polygon points=\"0,0 10,3.50 0,7\" fill=\"#555555\"/></marker></defs>\n";
  }
  for (const LayoutNode& n : graph.nodes) {
    const Frame& f = n.frame;
    const std::string stroke = n.shape == NodeShape::Group ? "#999999" : "#333333";
    out << "<g data-id=\"" << escape_xml(n.id) << "\" data-shape=\"" << to_string(n.shape) << "\" data-frame=\""
        << num(f.x) << " " << num(f.y) << " " << num(f.w) << " " << num(f.h) << "\" data-fill=\"" << n.fill << "\"";
    if (n.group_id) out << " data-group=\"" << escape_xml(*n.group_id) << "\"";
    out << ">";
    switch (n.shape) {
      case NodeShape::Ellipse:
        out << "<ellipse cx=\"" << num(f.cx()) << "\" cy=\"" << num(f.cy()) << "\" rx=\"" << num(f.w / 2)
            << "\" ry=\"" << num(f.h / 2) << "\"";
        break;
      case NodeShape::Diamond: out << "<polygon points=\"" << diamond_points(f) << "\""; break;
      default:
        out << "<rect x=\"" << num(f.x) << "\" y=\"" << num(f.y) << "\" width=\"" << num(f.w) << "\" height=\""
            << num(f.h) << "\"";
        if (n.shape == NodeShape::Rounded) out << " rx=\"8.00\"";
    }
    out << " fill=\"" << n.fill << "\" stroke=\"" << stroke << "\" stroke-width=\"1.50\"";
    if (n.shape == NodeShape::Group) out << " stroke-dasharray=\"6,4\"";
    out << "/>";
    if (!n.label.empty()) {
      const double ty = n.shape == NodeShape::Group ? f.y + 12 : f.cy();
      out << "<text x=\"" << num(f.cx()) << "\" y=\"" << num(ty)
          << "\" font-family=\"DejaVu Sans Mono\" font-size=\"14\" text-anchor=\"middle\" "
             "dominant-baseline=\"central\">"
          << escape_xml(n.label) << "</text>";
    }
    out << "</g>\n";
  }
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const LayoutEdge& e = graph.edges[i];
    const LayoutNode* s = graph.find(e.source_id);
    const LayoutNode* t = graph.find(e.target_id);
    const Point a = border_point(*s, {t->frame.cx(), t->frame.cy()});
    const Point b = border_point(*t, {s->frame.cx(), s->frame.cy()});
    out << "<path data-index=\"" << i << "\" data-source=\"" << escape_xml(e.source_id) << "\" data-target=\""
        << escape_xml(e.target_id) << "\" data-edge=\"" << to_string(e.kind) << "\" d=\"M " << num(a.x) << " "
        << num(a.y) << " L " << num(b.x) << " " << num(b.y) << "\" fill=\"none\" stroke=\"#555555\" stroke-width=\"1.50\"";
    if (e.kind == EdgeKind::Dashed) out << " stroke-dasharray=\"6,4\"";
    if (e.kind == EdgeKind::Arrow) out << " marker-end=\"url(#arrowhead)\"";
    out << "/>\n";
    if (e.label) {
      out << "<text data-label-of=\"" << i << "\" x=\"" << num((a.x + b.x) / 2) << "\" y=\"" << num((a.y + b.y) / 2)
          << "\" font-family=\"DejaVu Sans Mono\" font-size=\"12\" text-anchor=\"middle\">" << escape_xml(*e.label)
          << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

ParsedSvg parse_svg_document(std::string_view markup) {
  const XmlElement root = XmlReader(markup).parse_document();
  if (root.name != "svg") throw MalformedMarkup("root element is <" + root.name + ">, expected <svg>");
  check_subset(root);

  ParseContext ctx;
  if (root.attr("width") && root.attr("height")) {
    ctx.graph.canvas = {parse_number(root.attr("width"), "width"), parse_number(root.attr("height"), "height")};
  } else if (const auto* vb = root.attr("viewBox")) {
    const auto v = parse_number_list(*vb);
    if (v.size() != 4) throw MalformedMarkup("viewBox needs four numbers");
    ctx.graph.canvas = {v[2], v[3]};
  } else {
    throw MalformedMarkup("<svg> has neither width/height nor viewBox");
  }

  for (const auto& c : root.children) {
    if (const auto* child = std::get_if<XmlElement>(&c)) walk(*child, ctx);
  }
  for (const auto& [index, text] : ctx.edge_labels) {
    if (index >= ctx.graph.edges.size()) throw MalformedMarkup("edge label refers to a missing edge");
    ctx.graph.edges[index].label = text;
  }
  // Loose text in hand-written markup labels the smallest unlabeled shape
  // containing its anchor; anything else is decoration.
  for (const auto& [p, text] : ctx.free_texts) {
    LayoutNode* best = nullptr;
    for (LayoutNode& n : ctx.graph.nodes) {
      const Frame& f = n.frame;
      if (!n.label.empty() || p.x < f.x || p.y < f.y || p.x > f.x + f.w || p.y > f.y + f.h) continue;
      if (best == nullptr || f.w * f.h < best->frame.w * best->frame.h) best = &n;
    }
    if (best != nullptr) best->label = text;
  }
  try {
    validate_layout(ctx.graph);
  } catch (const InvalidLayout& e) {
    throw MalformedMarkup(std::string("markup describes an invalid layout: ") + e.what());
  }

  ParsedSvg result;
  result.graph = std::move(ctx.graph);
  if (const auto* style_text = root.attr("data-style")) {
    StyleDescriptor style;
    style.style_text = *style_text;
    if (const auto* cat = root.attr("data-category")) style.category = category_from_label(*cat);
    if (const auto* palette = root.attr("data-palette")) {
      for (const auto& c : split(*palette, ',')) {
        if (!trim(c).empty()) style.palette_hint.push_back(trim(c));
      }
    }
    result.style = std::move(style);
  }
  return result;
}

LayoutGraph parse_svg(std::string_view markup) { return parse_svg_document(markup).graph; }

}  // namespace figforge
