#include "figforge/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "figforge/error.hpp"
#include "figforge/glyphs.hpp"
#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// prompt

std::string prompt_request(const LayoutGraph& layout, const StyleDescriptor& style) {
  std::ostringstream p;
  p << "### task: build_t2i_prompt\n"
       "Write an exhaustive prompt for a text-to-image model that will redraw the attached blueprint as a\n"
       "polished scientific illustration. Describe every component, its position, its connections and\n"
       "its exact label text. Include the style description below verbatim.\n"
       "Reply with the prompt inside a ```prompt fenced block.\n"
       "\n--- style ---\n"
    << style.style_text << "\n\n--- canvas ---\n"
    << layout.canvas.width << " x " << layout.canvas.height << "\n\n--- labels ---\n";
  for (const LayoutNode& n : layout.nodes) {
    const std::string l = normalize_whitespace(n.label);
    if (!l.empty()) p << l << "\n";
  }
  p << "\n--- markup ---\n" << serialize_svg(layout, style);
  return p.str();
}

std::vector<std::string> missing_from_prompt(const std::string& prompt, const LayoutGraph& layout,
                                             const StyleDescriptor& style) {
  const std::string haystack = to_lower(normalize_whitespace(prompt));
  std::vector<std::string> missing;
  for (const LayoutNode& n : layout.nodes) {
    const std::string l = normalize_whitespace(n.label);
    if (l.empty() || haystack.find(to_lower(l)) != std::string::npos) continue;
    if (std::find(missing.begin(), missing.end(), l) == missing.end()) missing.push_back(l);
  }
  if (prompt.find(style.style_text) == std::string::npos) missing.push_back("style text");
  return missing;
}

std::string build_prompt(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& text_model) {
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return complete_text(text_model, p);
  };
  const std::function<std::string(const std::string&)> parse = [&](const std::string& reply) {
    std::string prompt = trim(extract_fenced(reply, "prompt"));
    if (prompt.empty()) throw SchemaError("prompt is empty");
    const auto missing = missing_from_prompt(prompt, layout, style);
    if (!missing.empty()) {
      std::string names;
      for (const auto& m : missing) names += (names.empty() ? "" : ", ") + ("\"" + m + "\"");
      throw CoverageError("prompt does not mention " + names);
    }
    return prompt;
  };
  return ask_with_repair(ask, prompt_request(layout, style), parse);
}

// ---------------------------------------------------------------------------
// rendering

void validate(const RenderJob& job, const std::optional<Canvas>& canvas) {
  if (trim(job.prompt_text).empty()) throw PreconditionError("render prompt is empty");
  if (job.conditioning_image.empty()) throw PreconditionError("conditioning image is empty");
  if (job.target_width <= 0 || job.target_height <= 0) throw PreconditionError("render target size must be positive");
  if (canvas) {
    const double want = canvas->width / canvas->height;
    const double got = static_cast<double>(job.conditioning_image.width()) / job.conditioning_image.height();
    if (std::abs(got / want - 1.0) > 0.01) {
      throw PreconditionError("conditioning image aspect ratio differs from the canvas by more than 1%");
    }
  }
}

Rendered render_polished(const RenderJob& job, Gateway& t2i) {
  validate(job);
  Rendered out;
  out.image = text_to_image(t2i, job.prompt_text, job.conditioning_image, job.target_width, job.target_height);
  if (out.image.width() != job.target_width || out.image.height() != job.target_height) {
    out.warnings.push_back("text-to-image returned " + std::to_string(out.image.width()) + "x" +
                           std::to_string(out.image.height()) + "; letterboxed to " + std::to_string(job.target_width) +
                           "x" + std::to_string(job.target_height));
    out.image = resize_letterbox(out.image, job.target_width, job.target_height);
  }
  return out;
}

// ---------------------------------------------------------------------------
// verification

std::string_view to_string(TextStatus s) {
  switch (s) {
    case TextStatus::Matched: return "matched";
    case TextStatus::Kept: return "kept";
    case TextStatus::Dropped: return "dropped";
  }
  return "kept";
}

TextStatus text_status_from_string(std::string_view s) {
  for (TextStatus t : {TextStatus::Matched, TextStatus::Kept, TextStatus::Dropped}) {
    if (to_string(t) == s) return t;
  }
  throw SchemaError("unknown text status '" + std::string(s) + "'");
}

namespace {

std::string adjudication_prompt(const std::string& ocr_text, const std::vector<std::string>& candidates) {
  std::string p =
      "### task: adjudicate_text\n"
      "An OCR engine read the string below from a figure. The candidate labels are equally close to it.\n"
      "Pick the label the figure most likely shows.\n"
      "Reply format:\n"
      "choice: <one candidate, verbatim>\n"
      "\n--- ocr ---\n" +
      ocr_text + "\n\n--- candidates ---\n";
  for (const auto& c : candidates) p += c + "\n";
  return p;
}

std::string adjudicate(const OcrItem& item, const std::string& ocr_text, const std::vector<std::string>& candidates,
                       Gateway& vision_model, const Image* image) {
  std::vector<Image> images;
  if (image != nullptr && image->in_bounds(item.bbox)) {
    Image crop(item.bbox.w, item.bbox.h);
    for (int y = 0; y < item.bbox.h; ++y) {
      for (int x = 0; x < item.bbox.w; ++x) crop.set(x, y, image->at(item.bbox.x + x, item.bbox.y + y));
    }
    images.push_back(std::move(crop));
  }
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return ask_vision(vision_model, p, images);
  };
  const std::function<std::string(const std::string&)> parse = [&](const std::string& reply) {
    const auto choice = parse_structured_reply(reply).field("choice");
    if (!choice) throw SchemaError("reply has no 'choice:' line");
    const std::string c = trim(*choice);
    for (const auto& cand : candidates) {
      if (cand == c) return cand;
    }
    if (auto idx = parse_double(c); idx && *idx >= 1 && *idx <= static_cast<double>(candidates.size()) &&
                                    *idx == std::floor(*idx)) {
      return candidates[static_cast<std::size_t>(*idx) - 1];
    }
    throw SchemaError("choice '" + c + "' is not one of the candidates");
  };
  return ask_with_repair(ask, adjudication_prompt(ocr_text, candidates), parse);
}

}  // namespace

TextLibrary verify_text(const std::vector<OcrItem>& ocr_items, const LabelMultiset& ground_truth,
                        Gateway& vision_model, const MatchRule& rule, const Image* image) {
  std::map<std::string, int> remaining;
  for (const auto& label : ground_truth) {
    const std::string l = normalize_whitespace(label);
    if (!l.empty()) ++remaining[l];
  }

  TextLibrary lib;
  std::vector<std::string> normalized;
  for (std::size_t i = 0; i < ocr_items.size(); ++i) {
    TextItem t;
    t.id = "t" + std::to_string(i);
    t.ocr_text = ocr_items[i].text;
    t.corrected_text = ocr_items[i].text;
    t.bbox = ocr_items[i].bbox;
    t.confidence = ocr_items[i].confidence;
    lib.items.push_back(std::move(t));
    normalized.push_back(normalize_whitespace(ocr_items[i].text));
  }

  struct Pair {
    double distance;
    std::size_t item;
    std::string label;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (normalized[i].empty()) continue;
    for (const auto& [label, count] : remaining) {
      const double d = normalized_edit_distance(normalized[i], label);
      if (d <= rule.max_distance) pairs.push_back({d, i, label});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.distance, a.item, a.label) < std::tie(b.distance, b.item, b.label);
  });

  std::vector<bool> assigned(lib.items.size(), false);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Pair& p = pairs[k];
    if (assigned[p.item] || remaining[p.label] == 0) continue;
    // All labels still available to this item at the same best distance.
    std::vector<std::string> tied;
    for (std::size_t j = k; j < pairs.size() && pairs[j].distance == p.distance && pairs[j].item == p.item; ++j) {
      if (remaining[pairs[j].label] > 0) tied.push_back(pairs[j].label);
    }
    const std::string chosen =
        tied.size() > 1 ? adjudicate(ocr_items[p.item], normalized[p.item], tied, vision_model, image) : p.label;
    --remaining[chosen];
    assigned[p.item] = true;
    lib.items[p.item].corrected_text = chosen;
    lib.items[p.item].status = TextStatus::Matched;
  }

  for (std::size_t i = 0; i < lib.items.size(); ++i) {
    if (assigned[i]) continue;
    TextItem& t = lib.items[i];
    t.status = (!normalized[i].empty() && t.confidence >= rule.keep_floor) ? TextStatus::Kept : TextStatus::Dropped;
  }
  return lib;
}

namespace {

nlohmann::json bbox_json(const PixelBox& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); }

}  // namespace

nlohmann::json library_json(const std::vector<OcrItem>& items, int image_w, int image_h) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    arr.push_back({{"id", "t" + std::to_string(i)},
                   {"text", items[i].text},
                   {"bbox", bbox_json(items[i].bbox)},
                   {"confidence", items[i].confidence}});
  }
  return {{"image", {{"w", image_w}, {"h", image_h}}}, {"items", arr}};
}

nlohmann::json corrected_library_json(const TextLibrary& library, int image_w, int image_h) {
  nlohmann::json arr = nlohmann::json::array();
  for (const TextItem& t : library.items) {
    arr.push_back({{"id", t.id},
                   {"text", t.ocr_text},
                   {"bbox", bbox_json(t.bbox)},
                   {"confidence", t.confidence},
                   {"corrected_text", t.corrected_text},
                   {"status", to_string(t.status)}});
  }
  return {{"image", {{"w", image_w}, {"h", image_h}}}, {"items", arr}};
}

TextLibrary corrected_library_from_json(const nlohmann::json& j) {
  try {
    TextLibrary lib;
    for (const auto& it : j.at("items")) {
      TextItem t;
      t.id = it.at("id").get<std::string>();
      t.ocr_text = it.at("text").get<std::string>();
      const auto b = it.at("bbox").get<std::vector<int>>();
      if (b.size() != 4) throw SchemaError("bbox needs four integers");
      t.bbox = {b[0], b[1], b[2], b[3]};
      t.confidence = it.at("confidence").get<double>();
      t.corrected_text = it.at("corrected_text").get<std::string>();
      t.status = text_status_from_string(it.at("status").get<std::string>());
      lib.items.push_back(std::move(t));
    }
    return lib;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("corrected library is malformed: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// composition

Composed compose_final(const Image& erased, const TextLibrary& library) {
  std::vector<const TextItem*> items;
  for (const TextItem& t : library.items) {
    if (t.status == TextStatus::Dropped) continue;
    if (!erased.in_bounds(t.bbox)) throw PreconditionError("library box for " + t.id + " lies outside the image");
    items.push_back(&t);
  }
  std::stable_sort(items.begin(), items.end(), [](const TextItem* a, const TextItem* b) {
    return std::tie(a->bbox.y, a->bbox.x) < std::tie(b->bbox.y, b->bbox.x);
  });

  Composed out;
  out.image = erased;
  LayoutGraph overlay;
  overlay.canvas = {static_cast<double>(erased.width()), static_cast<double>(erased.height())};
  for (const TextItem* t : items) {
    const PixelBox& b = t->bbox;
    double lum = 0;
    for (int y = b.y; y < b.bottom(); ++y) {
      for (int x = b.x; x < b.right(); ++x) lum += erased.at(x, y).luminance();
    }
    lum /= static_cast<double>(b.w) * b.h;
    const Rgb ink = lum < 0.5 ? kWhite : kBlack;
    if (glyphs::fit_scale(t->corrected_text, b.w, b.h) == 0) {
      out.warnings.push_back("text of " + t->id + " does not fit its box and is clipped");
    }
    glyphs::draw(out.image, t->corrected_text, b, ink);
    for (const PixelBox& prev : out.drawn_boxes) {
      if (prev.intersects(b)) out.warnings.push_back("overlay box of " + t->id + " overlaps an earlier box");
    }
    out.drawn_boxes.push_back(b);

    LayoutNode n;
    n.id = t->id;
    n.label = t->corrected_text;
    n.frame = {static_cast<double>(b.x), static_cast<double>(b.y), static_cast<double>(b.w), static_cast<double>(b.h)};
    n.fill = "none";
    overlay.nodes.push_back(std::move(n));
  }
  StyleDescriptor style;
  style.style_text = "text overlay";
  out.overlay_svg = serialize_svg(overlay, style);
  return out;
}

// ---------------------------------------------------------------------------
// stage

TextRepair repair_text(const Image& polished, const LabelMultiset& ground_truth, Gateway& gateway,
                       const MatchRule& rule) {
  TextRepair r;
  r.ocr_items = ocr(gateway, polished);
  r.library = verify_text(r.ocr_items, ground_truth, gateway, rule, &polished);
  // Every OCR region is erased, hallucinations included; only non-dropped
  // items are drawn back.
  std::vector<PixelBox> boxes;
  for (const OcrItem& item : r.ocr_items) boxes.push_back(item.bbox);
  r.erased = erase_text(gateway, polished, boxes);
  if (r.erased.width() != polished.width() || r.erased.height() != polished.height()) {
    throw BackendError("eraser changed the image dimensions");
  }
  r.composed = compose_final(r.erased, r.library);
  return r;
}

namespace {

void emit(Stage2Result& res, const Stage2Options& options, const std::string& name, std::string_view bytes) {
  if (!options.out_dir) return;
  fs::create_directories(*options.out_dir);
  write_file_atomic(*options.out_dir / name, bytes);
  res.artifacts.push_back(name);
}

}  // namespace

Stage2Result render_stage(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& gateway,
                          const Stage2Options& options) {
  Stage2Result res;
  res.prompt = build_prompt(layout, style, gateway);
  emit(res, options, "prompt.txt", res.prompt + "\n");

  res.conditioning = render_layout(layout, options.raster_scale);
  RenderJob job{res.prompt, res.conditioning, res.conditioning.width(), res.conditioning.height()};
  validate(job, layout.canvas);
  Rendered rendered = render_polished(job, gateway);
  res.polished = std::move(rendered.image);
  res.warnings = std::move(rendered.warnings);
  emit(res, options, "polished.png", encode_png(res.polished));
  return res;
}

void text_stage(Stage2Result& res, const LayoutGraph& layout, Gateway& gateway, const Stage2Options& options) {
  if (res.polished.empty()) throw PreconditionError("text stage needs the polished image");
  if (options.skip_text_refinement) {
    res.erased = res.polished;
    res.final_image = res.polished;
    emit(res, options, "final.png", encode_png(res.polished));
    return;
  }
  TextRepair repair = repair_text(res.polished, extract_labels(layout), gateway, options.match);
  res.ocr_items = std::move(repair.ocr_items);
  res.library = std::move(repair.library);
  res.erased = std::move(repair.erased);
  res.final_image = std::move(repair.composed.image);
  res.overlay_svg = std::move(repair.composed.overlay_svg);
  res.warnings.insert(res.warnings.end(), repair.composed.warnings.begin(), repair.composed.warnings.end());
  const int w = res.polished.width();
  const int h = res.polished.height();
  emit(res, options, "library.json", library_json(res.ocr_items, w, h).dump(2) + "\n");
  emit(res, options, "corrected_library.json", corrected_library_json(res.library, w, h).dump(2) + "\n");
  emit(res, options, "erased.png", encode_png(res.erased));
  emit(res, options, "final.png", encode_png(res.final_image));
  emit(res, options, "final_overlay.svg", res.overlay_svg);
  for (const auto& warning : repair.composed.warnings) spdlog::warn("text repair: {}", warning);
}

Stage2Result run_stage2(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& gateway,
                        const Stage2Options& options) {
  Stage2Result res = render_stage(layout, style, gateway, options);
  text_stage(res, layout, gateway, options);
  return res;
}

}  // namespace figforge
