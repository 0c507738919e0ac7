// figforge: document -> method figure, plus the evaluation and statistics
// commands used to study the results.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "figforge/config.hpp"
#include "figforge/error.hpp"
#include "figforge/runner.hpp"
#include "figforge/util.hpp"

namespace fs = std::filesystem;
using namespace figforge;

namespace {

struct GenerateArgs {
  fs::path input;
  std::optional<std::string> style;
  std::optional<int> iterations;
  std::optional<double> threshold;
  std::optional<double> epsilon;
  bool skip_text = false;
  std::optional<fs::path> run_dir;
  std::optional<std::string> stop_after;
};

struct EvaluateArgs {
  std::optional<std::string> mode;
  std::optional<fs::path> items;
  fs::path reference, generated, text;
  std::string item_id = "item";
  std::string method = "generated";
};

struct StatsArgs {
  std::optional<fs::path> input;
  std::optional<fs::path> images;
};

Config load(const std::optional<fs::path>& path) { return path ? load_config(*path) : Config{}; }

int cmd_generate(const GenerateArgs& a, Config config, const fs::path& out) {
  if (a.style) config.pipeline.style = *a.style;
  if (a.iterations) config.pipeline.iterations = *a.iterations;
  if (a.threshold) config.pipeline.threshold = *a.threshold;
  if (a.epsilon) config.pipeline.epsilon = *a.epsilon;
  if (a.skip_text) config.pipeline.skip_text_refinement = true;
  GenerateOptions o;
  o.out_root = out;
  o.run_dir = a.run_dir;
  o.stop_after = a.stop_after;
  const GenerateResult r = generate(a.input, config, o);
  for (const auto& w : r.manifest.warnings) spdlog::warn("{}", w);
  std::cout << r.run_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a, const Config& config, const fs::path& out) {
  std::vector<EvalItem> items;
  if (a.items) {
    items = read_eval_items(*a.items);
  } else {
    if (a.reference.empty() || a.generated.empty() || a.text.empty()) {
      throw ValidationError("evaluate needs --items or all of --reference, --generated and --text");
    }
    items.push_back({a.item_id, a.method, a.reference, a.generated, a.text});
  }
  const EvalMode mode = eval_mode_from_string(a.mode.value_or(config.judge.mode));
  auto gw = build_gateway(config, config.gateway.cache_dir);
  const EvalReport report = evaluate(items, mode, config.seed, *gw, config.pipeline.workers);
  write_evaluation(report, out);
  std::cout << evaluation_summary(report).dump(2) << "\n";
  return 0;
}

void write_summary(const fs::path& out, const nlohmann::ordered_json& summary) {
  fs::create_directories(out);
  write_file_atomic(out / "stats_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
}

int cmd_figures(const StatsArgs& a, const Config& config, const fs::path& out) {
  if (a.input.has_value() == a.images.has_value()) throw ValidationError("stats figures needs exactly one of --input or --images");
  std::vector<FigureRow> rows;
  std::string convention;
  if (a.input) {
    rows = read_figure_rows(*a.input);
    convention = "as recorded in " + a.input->filename().string();
  } else {
    auto gw = build_gateway(config, config.gateway.cache_dir);
    std::vector<std::string> warnings;
    rows = measure_directory(*a.images, *gw, &warnings);
    for (const auto& w : warnings) spdlog::warn("{}", w);
    convention = "percent of image area covered by text boxes";
    fs::create_directories(out);
    write_file_atomic(out / "figures.csv", figure_rows_csv(rows));
  }
  write_summary(out, figures_summary(rows, convention));
  return 0;
}

fs::path required(const StatsArgs& a, const char* command) {
  if (!a.input) throw ValidationError(std::string("stats ") + command + " needs --input");
  return *a.input;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"figforge: turn a method description into a figure, and evaluate figures"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool verbose = false;
  bool quiet = false;
  app.add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Run the pipeline on one document");
  generate_cmd->add_option("input", gen.input, "Document (.txt, .md, .tex)")->required();
  generate_cmd->add_option("--style", gen.style, "Style description for the figure");
  generate_cmd->add_option("--iterations", gen.iterations, "Refinement budget");
  generate_cmd->add_option("--threshold", gen.threshold, "Critic score that ends refinement early");
  generate_cmd->add_option("--epsilon", gen.epsilon, "Convergence tolerance");
  generate_cmd->add_flag("--skip-text-refinement", gen.skip_text, "Keep the rendered image as final");
  generate_cmd->add_option("--run-dir", gen.run_dir, "Use or resume this run directory");
  generate_cmd->add_option("--stop-after", gen.stop_after, "Stop after a stage")
      ->check(CLI::IsMember({"ingest", "refine", "layout", "render", "text"}));
  generate_cmd->add_option("--out", out, "Parent directory for new runs")->default_val("runs");
  generate_cmd->add_option("--seed", seed, "Root seed");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Judge generated figures against references");
  evaluate_cmd->add_option("--mode", ev.mode, "score, pairwise or extended")
      ->check(CLI::IsMember({"score", "pairwise", "extended"}));
  evaluate_cmd->add_option("--seed", seed, "Root seed for presentation order");
  evaluate_cmd->add_option("--items", ev.items, "CSV: item_id,method,reference,generated,text")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--reference", ev.reference, "Reference figure (PNG)");
  evaluate_cmd->add_option("--generated", ev.generated, "Generated figure (PNG)");
  evaluate_cmd->add_option("--text", ev.text, "Full source text");
  evaluate_cmd->add_option("--id", ev.item_id, "Item id for a single comparison");
  evaluate_cmd->add_option("--method", ev.method, "Method name for a single comparison");
  evaluate_cmd->add_option("--out", out, "Report directory")->default_val("evaluation");

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("stats", "Figure complexity and agreement statistics");
  stats_cmd->require_subcommand(1);
  stats_cmd->fallthrough();
  auto* figures_cmd = stats_cmd->add_subcommand("figures", "Average complexity over a CSV or a PNG directory");
  figures_cmd->add_option("--input", st.input, "CSV: item_id,[category],text_density,components,colors,shapes")
      ->check(CLI::ExistingFile);
  figures_cmd->add_option("--images", st.images, "Directory of PNG figures")->check(CLI::ExistingDirectory);
  auto* kappa_cmd = stats_cmd->add_subcommand("kappa", "Cohen's kappa between two raters");
  kappa_cmd->add_option("--input", st.input, "CSV: item_id,rater_a,rater_b")->check(CLI::ExistingFile);
  auto* correlate_cmd = stats_cmd->add_subcommand("correlate", "Pearson, Spearman, Kendall and ranking error");
  correlate_cmd->add_option("--input", st.input, "CSV: item_id,x,y,[group]")->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", out, "Report directory")->default_val("stats");

  fs::path batch_list;
  auto* batch_cmd = app.add_subcommand("batch", "Run generate over a list of documents");
  batch_cmd->add_option("--manifest", batch_list, "One document path per line")->required()->check(CLI::ExistingFile);
  batch_cmd->add_option("--out", out, "Parent directory for the runs")->default_val("runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);
  spdlog::set_pattern("%^%l%$ %v");

  try {
    Config config = load(config_path);
    if (seed) config.seed = *seed;
    validate(config);
    if (*generate_cmd) return cmd_generate(gen, config, out);
    if (*evaluate_cmd) return cmd_evaluate(ev, config, out);
    if (*figures_cmd) return cmd_figures(st, config, out);
    if (*kappa_cmd) {
      write_summary(out, kappa_summary(required(st, "kappa")));
      return 0;
    }
    if (*correlate_cmd) {
      write_summary(out, correlate_summary(required(st, "correlate")));
      return 0;
    }
    if (*batch_cmd) {
      int worst = 0;
      for (const auto& e : run_batch(read_batch_list(batch_list), config, out)) {
        std::cout << (e.exit_code == 0 ? "ok   " : "fail ") << e.input.string() << " -> " << e.run_dir.string() << "\n";
        worst = std::max(worst, e.exit_code);
      }
      return worst;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
