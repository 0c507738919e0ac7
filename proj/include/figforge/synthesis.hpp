#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/gateway.hpp"
#include "figforge/image.hpp"
#include "figforge/layout.hpp"

namespace figforge {

// --- prompt ----------------------------------------------------------------

std::string prompt_request(const LayoutGraph& layout, const StyleDescriptor& style);
// Labels (whitespace-normalized) that `prompt` does not mention, plus the
// style text when it is not carried verbatim (reported as "style text").
std::vector<std::string> missing_from_prompt(const std::string& prompt, const LayoutGraph& layout,
                                             const StyleDescriptor& style);
// Text-to-image prompt covering every node label and the style text. One
// repair retry, then CoverageError naming what is missing.
std::string build_prompt(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& text_model);

// --- rendering -------------------------------------------------------------

struct RenderJob {
  std::string prompt_text;
  Image conditioning_image;
  int target_width = 0;
  int target_height = 0;
};

// PreconditionError for an empty prompt or conditioning image, a
// non-positive target, or a conditioning aspect ratio off by more than 1%
// from `canvas` (when given).
void validate(const RenderJob& job, const std::optional<Canvas>& canvas = std::nullopt);

struct Rendered {
  Image image;
  std::vector<std::string> warnings;  // e.g. the backend ignored the size
};

Rendered render_polished(const RenderJob& job, Gateway& t2i);

// --- text verification -----------------------------------------------------

enum class TextStatus { Matched, Kept, Dropped };
std::string_view to_string(TextStatus s);
TextStatus text_status_from_string(std::string_view s);

struct TextItem {
  std::string id;
  std::string ocr_text;
  std::string corrected_text;
  PixelBox bbox;
  double confidence = 0;
  TextStatus status = TextStatus::Kept;

  friend bool operator==(const TextItem&, const TextItem&) = default;
};

struct TextLibrary {
  std::vector<TextItem> items;
  friend bool operator==(const TextLibrary&, const TextLibrary&) = default;
};

struct MatchRule {
  double max_distance = 0.34;  // normalized Levenshtein, inclusive
  double keep_floor = 0.5;     // unmatched items below this are hallucinations
};

// Greedy global assignment of OCR strings to ground-truth labels. Pairs are
// taken in order of (distance, item, label); each label is used at most its
// multiplicity. The vision model is consulted only when an item has several
// distinct available labels at the same best distance. Unmatched items are
// kept at or above the keep floor and dropped below it; empty strings are
// dropped. `image`, when given, lets the adjudicator see the text crop.
TextLibrary verify_text(const std::vector<OcrItem>& ocr_items, const LabelMultiset& ground_truth,
                        Gateway& vision_model, const MatchRule& rule = {}, const Image* image = nullptr);

// library.json / corrected_library.json
nlohmann::json library_json(const std::vector<OcrItem>& items, int image_w, int image_h);
nlohmann::json corrected_library_json(const TextLibrary& library, int image_w, int image_h);
TextLibrary corrected_library_from_json(const nlohmann::json& j);

// --- composition -----------------------------------------------------------

struct Composed {
  Image image;
  std::string overlay_svg;  // vector sidecar in the layout markup subset
  std::vector<PixelBox> drawn_boxes;
  std::vector<std::string> warnings;
};

// Draws every non-dropped item's corrected text inside its box at the
// largest fitting integer scale, dark or light by the box's mean background
// luminance, in (y, x) order. Pixels outside the drawn boxes are untouched.
Composed compose_final(const Image& erased, const TextLibrary& library);

// --- whole stage -----------------------------------------------------------

struct Stage2Options {
  bool skip_text_refinement = false;
  double raster_scale = 1.0;
  MatchRule match;
  // When set, artifacts are written here: prompt.txt, polished.png and, unless
  // skipped, library.json, corrected_library.json, erased.png; always final.png
  // and, unless skipped, final_overlay.svg.
  std::optional<std::filesystem::path> out_dir;
};

struct Stage2Result {
  std::string prompt;
  Image conditioning;
  Image polished;
  std::vector<OcrItem> ocr_items;
  TextLibrary library;
  Image erased;
  Image final_image;
  std::string overlay_svg;
  std::vector<std::string> warnings;
  std::vector<std::string> artifacts;  // relative paths written, in order
};

// All five capability slots are served by `gateway`.
// render_stage writes prompt.txt and polished.png; text_stage continues from
// `res.polished` and writes the rest. run_stage2 runs both.
Stage2Result render_stage(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& gateway,
                          const Stage2Options& options = {});
void text_stage(Stage2Result& res, const LayoutGraph& layout, Gateway& gateway, const Stage2Options& options = {});
Stage2Result run_stage2(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& gateway,
                        const Stage2Options& options = {});

// The text-repair half on its own: OCR, verify, erase, compose.
struct TextRepair {
  std::vector<OcrItem> ocr_items;
  TextLibrary library;
  Image erased;
  Composed composed;
};
TextRepair repair_text(const Image& polished, const LabelMultiset& ground_truth, Gateway& gateway,
                       const MatchRule& rule = {});

}  // namespace figforge
