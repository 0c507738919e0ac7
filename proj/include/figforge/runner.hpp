#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/config.hpp"
#include "figforge/judge.hpp"
#include "figforge/stats.hpp"

namespace figforge {

// --- run manifest ----------------------------------------------------------

inline constexpr std::array<std::string_view, 5> kStages = {"ingest", "refine", "layout", "render", "text"};

enum class StageStatus { Pending, Done, Failed };
std::string_view to_string(StageStatus s);
StageStatus stage_status_from_string(std::string_view s);

struct ArtifactRecord {
  std::string name;    // logical name, also the path relative to the run directory
  std::string stage;
  std::string sha256;

  friend bool operator==(const ArtifactRecord&, const ArtifactRecord&) = default;
};

struct RunManifest {
  std::string run_id;
  std::string input_path;
  std::string input_digest;
  nlohmann::ordered_json config;  // snapshot, fixed at run start
  std::map<std::string, StageStatus> stages;
  std::optional<std::string> failed_stage_error;
  std::vector<ArtifactRecord> artifacts;  // pipeline order
  std::vector<std::string> warnings;
  nlohmann::ordered_json document;  // id, format, token_count, category
  nlohmann::ordered_json refine;    // initial/best score, rounds, stop reason

  StageStatus status(std::string_view stage) const;
  bool complete() const;
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::ordered_json& j);
RunManifest read_manifest(const std::filesystem::path& run_dir);

// --- generate --------------------------------------------------------------

struct GenerateOptions {
  std::filesystem::path out_root = "runs";
  // Use this directory instead of a fresh one. When it already holds a
  // manifest for the same input and config, finished stages whose artifacts
  // still match their digests are skipped.
  std::optional<std::filesystem::path> run_dir;
  // Stop cleanly after this stage (the rest stay pending).
  std::optional<std::string> stop_after;
  // Injected gateway; when null one is built from the config.
  Gateway* gateway = nullptr;
};

struct GenerateResult {
  std::filesystem::path run_dir;
  RunManifest manifest;
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
};

// document -> final illustration. On a stage error the manifest records the
// failed stage and the error propagates.
GenerateResult generate(const std::filesystem::path& input, const Config& config, const GenerateOptions& options = {});

// Verifies that every artifact of every finished stage is present with its
// recorded digest. Returns the problems found.
std::vector<std::string> verify_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest);

// --- batch -----------------------------------------------------------------

struct BatchEntry {
  std::filesystem::path input;
  std::filesystem::path run_dir;
  int exit_code = 0;
  std::string error;
};

// Non-empty, non-comment lines; relative paths resolve against the list's
// directory.
std::vector<std::filesystem::path> read_batch_list(const std::filesystem::path& list);

// Runs documents concurrently on `config.pipeline.workers` threads sharing one
// gateway. Writes batch_summary.json under out_root.
std::vector<BatchEntry> run_batch(const std::vector<std::filesystem::path>& inputs, const Config& config,
                                  const std::filesystem::path& out_root, Gateway* gateway = nullptr);

// --- evaluate --------------------------------------------------------------

enum class EvalMode { Score, Pairwise, Extended };
std::string_view to_string(EvalMode m);
EvalMode eval_mode_from_string(std::string_view s);

struct EvalItem {
  std::string item_id;
  std::string method;
  std::filesystem::path reference;
  std::filesystem::path generated;
  std::filesystem::path full_text;
};

// CSV with columns item_id, method, reference, generated, text. Relative
// paths resolve against the CSV's directory.
std::vector<EvalItem> read_eval_items(const std::filesystem::path& csv);

// Per-item presentation seed derived from the root seed (splitmix64 of
// root + index).
std::uint64_t item_seed(std::uint64_t root_seed, std::size_t index);

struct EvalRow {
  EvalItem item;
  std::optional<ScoreCard> score;
  std::optional<PairwiseVerdict> verdict;
};

struct EvalReport {
  EvalMode mode = EvalMode::Score;
  std::uint64_t root_seed = 0;
  std::vector<EvalRow> rows;  // input order
};

EvalReport evaluate(const std::vector<EvalItem>& items, EvalMode mode, std::uint64_t root_seed, Gateway& vision_model,
                    int workers = 1);
std::string evaluation_csv(const EvalReport& report);
nlohmann::ordered_json evaluation_summary(const EvalReport& report);
// Writes evaluation.csv and evaluation_summary.json.
void write_evaluation(const EvalReport& report, const std::filesystem::path& out_dir);

// --- stats -----------------------------------------------------------------

struct FigureRow {
  std::string item_id;
  std::string category;  // may be empty
  FigureStats stats;
};

// CSV: item_id, [category], text_density, components, colors, shapes.
std::vector<FigureRow> read_figure_rows(const std::filesystem::path& csv);
// Measures every PNG in `dir` (sorted by name) with the vision backend.
std::vector<FigureRow> measure_directory(const std::filesystem::path& dir, Gateway& vision_model,
                                         std::vector<std::string>* warnings = nullptr);
std::string figure_rows_csv(const std::vector<FigureRow>& rows);
nlohmann::ordered_json figures_summary(const std::vector<FigureRow>& rows, const std::string& convention);

// CSV: item_id, rater_a, rater_b.
nlohmann::ordered_json kappa_summary(const std::filesystem::path& csv);
// CSV: item_id, x, y, [group].
nlohmann::ordered_json correlate_summary(const std::filesystem::path& csv);

}  // namespace figforge
