#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/error.hpp"
#include "figforge/gateway.hpp"
#include "figforge/ingest.hpp"
#include "figforge/layout.hpp"

namespace figforge {

enum class IssueKind { Overlap, Alignment, Flow, Completeness, Style };
std::string_view to_string(IssueKind k);
IssueKind issue_kind_from_string(std::string_view s);

struct Issue {
  IssueKind kind = IssueKind::Overlap;
  std::string detail;
  friend bool operator==(const Issue&, const Issue&) = default;
};

struct CritiqueReport {
  double score = 0;  // [0,10]
  std::string feedback;
  std::vector<Issue> per_issue;
  friend bool operator==(const CritiqueReport&, const CritiqueReport&) = default;
};

std::string critique_prompt(const LayoutGraph& layout, const StyleDescriptor& style, double threshold);
// Errors: SchemaError on a missing or out-of-range score, unknown issue
// kinds, or empty feedback below `threshold`.
CritiqueReport parse_critique_reply(const std::string& reply, double threshold);

// Asks the vision model to score the rasterized layout. The prompt carries
// the image, the markup and the measured metrics. One repair retry.
CritiqueReport critique(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& vision_model,
                        double threshold = 8.5, double raster_scale = 1.0);

struct Design {
  LayoutGraph layout;
  StyleDescriptor style;
  int attempts = 1;  // 2 when the first reply needed a repair
};

std::string design_prompt(const MethodSummary& method, const StyleDescriptor& requested, const std::string& feedback);
// Reply: a fenced ```svg block and optional `style:` / `palette:` lines.
// Errors: SchemaError when the markup does not describe a valid layout.
Design parse_design_reply(const std::string& reply, const StyleDescriptor& requested);

// A fresh candidate (never a patch) from the method and critic feedback.
Design regenerate(const MethodSummary& method, const std::string& feedback, Gateway& text_model,
                  const StyleDescriptor& requested = {});
// The first blueprint: regeneration without feedback.
Design design_initial(const MethodSummary& method, Gateway& text_model, const StyleDescriptor& requested = {});

struct RefineOptions {
  int max_iterations = 5;
  double threshold = 8.5;
  double epsilon = 0.05;
  double raster_scale = 1.0;
};

// Throws ValidationError for N < 0, threshold outside [0,10], epsilon < 0
// or a non-positive raster scale.
void validate(const RefineOptions& options);

enum class StopReason { Threshold, Converged, Budget };
std::string_view to_string(StopReason r);

struct HistoryEntry {
  int iteration = 0;
  double candidate_score = 0;
  bool accepted = false;
  std::vector<std::string> artifact_paths;
  LayoutGraph layout;
  StyleDescriptor style;
  CritiqueReport report;
  int design_attempts = 1;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct RefineState {
  LayoutGraph best_layout;
  StyleDescriptor best_style;
  double best_score = 0;
  CritiqueReport best_report;
  double initial_score = 0;
  int iteration = 0;  // last completed round; 0 after the initial critique
  std::vector<HistoryEntry> history;
  std::optional<StopReason> stop;
  std::vector<std::string> initial_artifacts;

  friend bool operator==(const RefineState&, const RefineState&) = default;
};

nlohmann::json refine_state_to_json(const RefineState& state);
RefineState refine_state_from_json(const nlohmann::json& j);

struct LoopHooks {
  // When set, each round writes iterations/iteration_<i>.svg/.png and
  // iterations/critique_<i>.json under this directory (i = 0 is the initial).
  std::optional<std::filesystem::path> artifact_dir;
  // Continue from a persisted partial state instead of starting over.
  std::optional<RefineState> resume;
  // Called after the initial critique and after every round.
  std::function<void(const RefineState&)> on_progress;
};

// Carries the loop state reached before a stage error. family() mirrors the
// underlying error so exit codes are preserved; cause() rethrows it.
class RefineInterrupted : public Error {
 public:
  RefineInterrupted(const Error& cause, RefineState partial, std::exception_ptr ptr)
      : Error(cause.what()), family_(cause.family()), partial_(std::move(partial)), cause_(std::move(ptr)) {}
  ErrorFamily family() const noexcept override { return family_; }
  const RefineState& partial() const { return partial_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  ErrorFamily family_;
  RefineState partial_;
  std::exception_ptr cause_;
};

// Critique-and-refine: one initial critique, then up to N rounds of
// (regenerate from the incumbent's feedback, critique the candidate). A
// candidate replaces the incumbent only on a strictly higher score. Stops at
// the threshold, on convergence (a rejected candidate within epsilon of the
// best) or when the budget runs out.
RefineState run_loop(const MethodSummary& method, const Design& initial, Gateway& text_model, Gateway& vision_model,
                     const RefineOptions& options = {}, const LoopHooks& hooks = {});

}  // namespace figforge
