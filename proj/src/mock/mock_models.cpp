#include "figforge/mock_models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "figforge/error.hpp"
#include "figforge/glyphs.hpp"
#include "figforge/layout.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge::mock {

std::string task_of(std::string_view prompt) {
  constexpr std::string_view marker = "### task:";
  const auto p = prompt.find(marker);
  if (p == std::string_view::npos) return "";
  const auto end = prompt.find('\n', p);
  return trim(prompt.substr(p + marker.size(), end == std::string_view::npos ? std::string_view::npos
                                                                             : end - p - marker.size()));
}

std::string prompt_section(std::string_view prompt, std::string_view name) {
  const std::string header = "--- " + std::string(name) + " ---\n";
  const auto p = prompt.find(header);
  if (p == std::string_view::npos) return "";
  const auto start = p + header.size();
  const auto end = prompt.find("\n\n--- ", start);
  return std::string(prompt.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

namespace {

std::uint32_t hash32(std::string_view s) {
  std::uint32_t h = 2166136261u;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

// ---------------------------------------------------------------------------
// text tasks

std::string classify(const std::string& doc) {
  const std::string text = to_lower(doc);
  auto count = [&](std::initializer_list<std::string_view> words) {
    int n = 0;
    for (auto w : words) {
      for (auto p = text.find(w); p != std::string::npos; p = text.find(w, p + 1)) ++n;
    }
    return n;
  };
  const std::vector<std::pair<std::string, int>> scores = {
      {"Paper", count({"we propose", "experiment", "our method", "baseline", "ablation", "state-of-the-art"})},
      {"Survey", count({"survey", "we review", "taxonomy", "overview of", "literature"})},
      {"Blog", count({"you ", "let's", "in this post", "tutorial", "i'll", "we'll"})},
      {"Textbook", count({"chapter", "definition", "theorem", "exercise", "students", "example "})}};
  const auto best = std::max_element(scores.begin(), scores.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  return best->second == 0 ? "Paper" : best->first;
}

const std::set<std::string, std::less<>> kStopwords = {
    "The",  "This", "That", "These", "Those", "We",    "Our",   "In",     "On",    "For",   "With",  "And",
    "But",  "It",   "Its",  "A",     "An",    "To",    "Of",    "By",     "As",    "At",    "From",  "Each",
    "Then", "When", "Where", "Which", "While", "Finally", "First", "Second", "Next", "After", "Before", "Figure",
    "Table", "Section", "Here", "There", "They", "Their", "If", "Is", "Are", "Be", "MATH", "Given", "Both",
    "All", "Such", "However", "Moreover", "Thus", "Hence", "To", "You", "I", "Let", "Note", "One", "Two"};

std::string method_reply(const std::string& doc) {
  // Candidate entities: capitalised words and acronyms, ranked by frequency.
  std::map<std::string, std::pair<int, std::size_t>> seen;  // word -> (count, first position)
  std::size_t pos = 0;
  for (const std::string& raw : split_whitespace(doc)) {
    std::string w;
    for (char c : raw) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') w.push_back(c);
    }
    while (!w.empty() && w.back() == '-') w.pop_back();
    ++pos;
    if (w.size() < 2 || w.size() > 16 || !std::isupper(static_cast<unsigned char>(w[0]))) continue;
    if (kStopwords.contains(w)) continue;
    auto& entry = seen.try_emplace(w, 0, pos).first->second;
    ++entry.first;
  }
  std::vector<std::pair<std::string, std::pair<int, std::size_t>>> ranked(seen.begin(), seen.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second.first != b.second.first ? a.second.first > b.second.first : a.second.second < b.second.second;
  });
  if (ranked.size() > 6) ranked.resize(6);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second.second < b.second.second; });
  std::vector<std::string> labels;
  for (const auto& r : ranked) labels.push_back(r.first);
  if (labels.empty()) labels = {"Input", "Method", "Output"};
  if (labels.size() == 1) labels.push_back("Output");

  std::string summary = normalize_whitespace(doc);
  if (auto stop = summary.find(". "); stop != std::string::npos && stop < 300) summary = summary.substr(0, stop + 1);
  if (summary.size() > 300) summary = summary.substr(0, 300);
  if (summary.empty()) summary = "A method.";

  std::ostringstream r;
  r << "summary: " << summary << "\n```entities\n";
  for (std::size_t i = 0; i < labels.size(); ++i) r << "e" << i << " | " << labels[i] << " | component\n";
  r << "```\n```relations\n";
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) r << "e" << i << " | e" << (i + 1) << " | \n";
  r << "```\n";
  return r.str();
}

const char* const kPalette[] = {"#d8c3a5", "#c9d6c3", "#b8c5d6", "#e0c9c9", "#d6cfe0", "#cfe0dc"};

std::string design_reply(const std::string& prompt) {
  const std::string style_section = prompt_section(prompt, "requested style");
  const std::string style_text = trim(style_section.substr(0, style_section.find('\n')));
  std::vector<std::pair<std::string, std::string>> entities;
  for (const auto& line : split(prompt_section(prompt, "entities"), '\n')) {
    const auto cells = split(line, '|');
    if (cells.size() >= 2 && !trim(cells[0]).empty()) entities.emplace_back(trim(cells[0]), trim(cells[1]));
  }
  std::vector<std::tuple<std::string, std::string, std::string>> relations;
  for (const auto& line : split(prompt_section(prompt, "relations"), '\n')) {
    const auto cells = split(line, '|');
    if (cells.size() >= 2 && !trim(cells[0]).empty()) {
      relations.emplace_back(trim(cells[0]), trim(cells[1]), cells.size() > 2 ? trim(cells[2]) : "");
    }
  }
  const std::string feedback = trim(prompt_section(prompt, "feedback"));
  const bool first_draft = feedback.empty() || feedback.starts_with("(none");

  LayoutGraph g;
  const int n = static_cast<int>(entities.size());
  if (n > 0) {
    const int cols = std::min(n, 4);
    const int rows = (n + cols - 1) / cols;
    const double margin = 40;
    const double cell_w = (g.canvas.width - 2 * margin) / cols;
    const double cell_h = (g.canvas.height - 2 * margin) / rows;
    const double w = std::floor(std::min(180.0, cell_w - 40));
    const double h = std::floor(std::min(80.0, cell_h - 30));
    for (int i = 0; i < n; ++i) {
      LayoutNode node;
      node.id = entities[static_cast<std::size_t>(i)].first;
      node.label = entities[static_cast<std::size_t>(i)].second;
      node.shape = NodeShape::Rounded;
      node.fill = kPalette[i % 6];
      double x = margin + (i % cols) * cell_w + (cell_w - w) / 2;
      double y = margin + (i / cols) * cell_h + (cell_h - h) / 2;
      if (first_draft) {
        // A rough first sketch: boxes drift off their grid positions.
        const std::uint32_t hv = hash32(node.id + node.label);
        x += static_cast<double>(hv % 31) - 15;
        y += static_cast<double>((hv >> 8) % 31) - 15;
      }
      node.frame = {std::round(x * 100) / 100, std::round(y * 100) / 100, w, h};
      g.nodes.push_back(std::move(node));
    }
    for (const auto& [s, t, label] : relations) {
      if (g.find(s) == nullptr || g.find(t) == nullptr) continue;
      LayoutEdge e{s, t, std::nullopt, EdgeKind::Arrow};
      if (!label.empty()) e.label = label;
      g.edges.push_back(std::move(e));
    }
  }
  StyleDescriptor style;
  style.style_text = style_text.empty() ? std::string(kDefaultStyle) : style_text;
  std::string reply = "style: " + style.style_text + "\npalette: ";
  for (int i = 0; i < 6; ++i) reply += std::string(i ? ", " : "") + kPalette[i];
  reply += "\n```svg\n" + serialize_svg(g, style) + "```\n";
  return reply;
}

std::string t2i_prompt_reply(const std::string& prompt) {
  const std::string style = trim(prompt_section(prompt, "style"));
  std::vector<std::string> labels;
  for (const auto& line : split(prompt_section(prompt, "labels"), '\n')) {
    if (!trim(line).empty()) labels.push_back(trim(line));
  }
  const std::string canvas = trim(prompt_section(prompt, "canvas"));
  std::string out = "```prompt\nA scientific illustration, " + canvas + " canvas, in this style: " + style + ". ";
  if (labels.empty()) {
    out += "The canvas is empty apart from the background.";
  } else {
    out += "It shows " + std::to_string(labels.size()) + " components laid out as in the blueprint, labelled exactly ";
    for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? ", " : "") + ("\"" + labels[i] + "\"");
    out += ", connected by arrows that follow the blueprint.";
  }
  return out + "\n```\n";
}

// ---------------------------------------------------------------------------
// vision tasks

double metric(const std::string& prompt, std::string_view key) {
  const auto fields = parse_structured_reply(prompt_section(prompt, "metrics"));
  const auto v = fields.field(key);
  return v ? parse_double(*v).value_or(0.0) : 0.0;
}

std::string critique_reply(const std::string& prompt) {
  const double overlap = metric(prompt, "overlap_area");
  const double align = metric(prompt, "alignment_deviation");
  const double balance = metric(prompt, "balance");
  const double nodes = metric(prompt, "node_count");
  std::vector<std::pair<std::string, std::string>> issues;
  double score = 9.2;
  if (nodes == 0) {
    score = 2.0;
    issues.emplace_back("completeness", "the layout has no components; draw the method's stages");
  } else {
    const double overlap_pen = std::min(4.0, overlap / 400.0);
    const double align_pen = std::min(2.0, align / 20.0);
    const double balance_pen = 3.0 * (1.0 - balance);
    score -= overlap_pen + align_pen + balance_pen;
    if (overlap_pen > 0.05) issues.emplace_back("overlap", "boxes overlap; separate them");
    if (align_pen > 0.3) issues.emplace_back("alignment", "box edges drift off shared guides; snap them to a grid");
    if (balance_pen > 0.3) issues.emplace_back("flow", "the composition is off-centre; rebalance it");
  }
  score = std::round(std::clamp(score, 0.0, 10.0) * 100) / 100;
  std::string feedback;
  for (const auto& [kind, detail] : issues) feedback += (feedback.empty() ? "" : "; ") + detail;
  if (feedback.empty()) feedback = "tidy layout; keep spacing consistent";
  std::string reply = "score: " + format_fixed(score, 2) + "\nfeedback: " + feedback + "\n```issues\n";
  for (const auto& [kind, detail] : issues) reply += kind + " | " + detail + "\n";
  return reply + "```\n";
}

// Mean absolute channel difference in [0,1] after fitting `b` to `a`'s size.
double image_distance(const Image& a, const Image& b) {
  const Image fitted = (a.width() == b.width() && a.height() == b.height()) ? b : resize_letterbox(b, a.width(), a.height());
  const auto pa = a.bytes();
  const auto pb = fitted.bytes();
  double sum = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) sum += std::abs(static_cast<int>(pa[i]) - static_cast<int>(pb[i]));
  return pa.empty() ? 0.0 : sum / (255.0 * static_cast<double>(pa.size()));
}

std::string score_reply(const std::vector<Image>& images) {
  if (images.size() < 2) throw PermanentFailure("referenced scoring needs two images");
  const double d = image_distance(images[0], images[1]);
  const double base = std::round(std::clamp(10.0 * (1.0 - 4.0 * d), 0.0, 10.0) * 100) / 100;
  std::string out;
  for (std::string_view key : {"aesthetic", "expressiveness", "polish", "clarity", "flow", "accuracy", "completeness",
                               "appropriateness"}) {
    out += std::string(key) + ": " + format_fixed(base, 2) + " | pixel agreement with the reference\n";
  }
  return out;
}

// Content-only preference, so the verdict never depends on which image is
// shown first.
int richness(const Image& img) {
  std::set<Rgb> colors;
  for (int y = 0; y < img.height(); y += 2) {
    for (int x = 0; x < img.width(); x += 2) {
      colors.insert(img.at(x, y));
      if (colors.size() >= 256) return 256;
    }
  }
  return static_cast<int>(colors.size());
}

std::string pairwise_reply(const std::string& prompt, const std::vector<Image>& images) {
  if (images.size() < 2) throw PermanentFailure("pairwise comparison needs two images");
  const bool extended = prompt.find("\nmode: extended\n") != std::string::npos;
  const int a = richness(images[0]);
  const int b = richness(images[1]);
  const std::string pick = a > b ? "A" : (b > a ? "B" : "Tie");
  std::string out;
  for (std::string_view c : {"aesthetic", "clarity", "sophistication", "accuracy", "completeness", "appropriateness"}) {
    out += std::string(c) + ": " + pick + "\n";
  }
  out += "overall: " + ((pick == "Tie" && extended) ? std::string("Both Good") : pick) + "\n";
  return out;
}

std::string adjudicate_reply(const std::string& prompt) {
  for (const auto& line : split(prompt_section(prompt, "candidates"), '\n')) {
    if (!trim(line).empty()) return "choice: " + trim(line) + "\n";
  }
  throw PermanentFailure("no candidates to choose from");
}

std::string measure_reply(const std::vector<Image>& images) {
  if (images.empty()) throw PermanentFailure("measure_figure needs an image");
  const Image& img = images[0];
  const double area = static_cast<double>(img.width()) * img.height();
  // Text: the decoded glyph cells.
  double text_area = 0;
  for (Rgb ink : {kBlack, kWhite}) {
    for (const auto& d : glyphs::decode(img, ink)) text_area += static_cast<double>(d.cell_box.w) * d.cell_box.h;
  }
  // Background is the most common colour; everything else is content.
  std::map<Rgb, long> hist;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) ++hist[img.at(x, y)];
  }
  Rgb background = kWhite;
  long best = -1;
  for (const auto& [c, n] : hist) {
    if (n > best) {
      best = n;
      background = c;
    }
  }
  int colors = 0;
  for (const auto& [c, n] : hist) {
    if (c != background && static_cast<double>(n) >= 0.005 * area) ++colors;
  }
  // Components: 4-connected non-background regions of at least 50 pixels.
  std::vector<char> seen(static_cast<std::size_t>(area), 0);
  int components = 0;
  bool boxy = false, thin = false, other = false;
  std::vector<std::pair<int, int>> stack;
  for (int y0 = 0; y0 < img.height(); ++y0) {
    for (int x0 = 0; x0 < img.width(); ++x0) {
      const auto idx0 = static_cast<std::size_t>(y0) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x0);
      if (seen[idx0] || img.at(x0, y0) == background) continue;
      long pixels = 0;
      int l = x0, r = x0, t = y0, b = y0;
      seen[idx0] = 1;
      stack.push_back({x0, y0});
      while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        ++pixels;
        l = std::min(l, x);
        r = std::max(r, x);
        t = std::min(t, y);
        b = std::max(b, y);
        const int nx[4] = {x + 1, x - 1, x, x};
        const int ny[4] = {y, y, y + 1, y - 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= img.width() || ny[k] >= img.height()) continue;
          const auto idx = static_cast<std::size_t>(ny[k]) * static_cast<std::size_t>(img.width()) +
                           static_cast<std::size_t>(nx[k]);
          if (seen[idx] || img.at(nx[k], ny[k]) == background) continue;
          seen[idx] = 1;
          stack.push_back({nx[k], ny[k]});
        }
      }
      if (pixels < 50) continue;
      ++components;
      const int w = r - l + 1;
      const int h = b - t + 1;
      if (std::min(w, h) <= 3) {
        thin = true;
      } else if (static_cast<double>(pixels) >= 0.9 * w * h) {
        boxy = true;
      } else {
        other = true;
      }
    }
  }
  const int shapes = static_cast<int>(boxy) + static_cast<int>(thin) + static_cast<int>(other);
  return "text_density: " + format_fixed(100.0 * text_area / area, 2) + "\ncomponents: " + std::to_string(components) +
         "\ncolors: " + std::to_string(colors) + "\nshapes: " + std::to_string(shapes) + "\n";
}

}  // namespace

BackendReply HeuristicText::invoke(const BackendRequest& request) {
  const std::string task = task_of(request.prompt);
  if (task == "classify_category") return {classify(prompt_section(request.prompt, "document")), MediaKind::Text};
  if (task == "extract_method") return {method_reply(prompt_section(request.prompt, "document")), MediaKind::Text};
  if (task == "design_layout") return {design_reply(request.prompt), MediaKind::Text};
  if (task == "build_t2i_prompt") return {t2i_prompt_reply(request.prompt), MediaKind::Text};
  throw PermanentFailure("heuristic text model has no handler for task '" + task + "'");
}

BackendReply HeuristicVision::invoke(const BackendRequest& request) {
  const std::string task = task_of(request.prompt);
  if (task == "critique_layout") return {critique_reply(request.prompt), MediaKind::Text};
  if (task == "referenced_score") return {score_reply(request.images), MediaKind::Text};
  if (task == "pairwise_compare") return {pairwise_reply(request.prompt, request.images), MediaKind::Text};
  if (task == "adjudicate_text") return {adjudicate_reply(request.prompt), MediaKind::Text};
  if (task == "measure_figure") return {measure_reply(request.images), MediaKind::Text};
  throw PermanentFailure("heuristic vision model has no handler for task '" + task + "'");
}

BackendReply GlyphOcr::invoke(const BackendRequest& request) {
  if (request.images.empty()) throw PermanentFailure("OCR needs an image");
  std::vector<OcrItem> items;
  for (Rgb ink : {kBlack, kWhite}) {
    for (const auto& d : glyphs::decode(request.images[0], ink)) items.push_back({d.text, d.cell_box, 1.0});
  }
  std::stable_sort(items.begin(), items.end(), [](const OcrItem& a, const OcrItem& b) {
    return std::tie(a.bbox.y, a.bbox.x) < std::tie(b.bbox.y, b.bbox.x);
  });
  if (drop_every_ > 0) {
    for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(drop_every_)) {
      if (items[i].text.size() > 1) {
        items[i].text.erase(0, 1);
        items[i].confidence = 0.9;
      }
    }
  }
  return {encode_ocr_items(items), MediaKind::Structured};
}

void register_heuristic_mocks(Gateway& gateway, const MockSetup& setup) {
  gateway.register_backend(Capability::Text, std::make_shared<HeuristicText>());
  gateway.register_backend(Capability::Vision, std::make_shared<HeuristicVision>());
  gateway.register_backend(Capability::TextToImage, std::make_shared<IdentityTextToImage>());
  gateway.register_backend(Capability::Ocr, std::make_shared<GlyphOcr>(setup.ocr_drop_first_char_every));
  gateway.register_backend(Capability::Erase, std::make_shared<RingFillEraser>());
}

}  // namespace figforge::mock
