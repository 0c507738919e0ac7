#include "figforge/runner.hpp"

#include <atomic>
#include <ctime>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "figforge/csv.hpp"
#include "figforge/error.hpp"
#include "figforge/ingest.hpp"
#include "figforge/layout.hpp"
#include "figforge/refine.hpp"
#include "figforge/synthesis.hpp"
#include "figforge/util.hpp"

namespace figforge {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after every worker has finished.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

fs::path resolve_against(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

}  // namespace

// ---------------------------------------------------------------------------
// manifest

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::Pending: return "pending";
    case StageStatus::Done: return "done";
    case StageStatus::Failed: return "failed";
  }
  return "pending";
}

StageStatus stage_status_from_string(std::string_view s) {
  for (auto v : {StageStatus::Pending, StageStatus::Done, StageStatus::Failed}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown stage status '" + std::string(s) + "'");
}

StageStatus RunManifest::status(std::string_view stage) const {
  const auto it = stages.find(std::string(stage));
  return it == stages.end() ? StageStatus::Pending : it->second;
}

bool RunManifest::complete() const {
  for (auto s : kStages) {
    if (status(s) != StageStatus::Done) return false;
  }
  return true;
}

ojson manifest_to_json(const RunManifest& m) {
  ojson j;
  j["run_id"] = m.run_id;
  j["input"] = {{"path", m.input_path}, {"sha256", m.input_digest}};
  j["config"] = m.config;
  j["document"] = m.document.is_null() ? ojson::object() : m.document;
  ojson stages = ojson::object();
  for (auto s : kStages) stages[std::string(s)] = std::string(to_string(m.status(s)));
  j["stages"] = std::move(stages);
  if (m.failed_stage_error) j["error"] = *m.failed_stage_error;
  ojson arts = ojson::array();
  for (const auto& a : m.artifacts) arts.push_back({{"name", a.name}, {"stage", a.stage}, {"sha256", a.sha256}});
  j["artifacts"] = std::move(arts);
  j["refine"] = m.refine.is_null() ? ojson::object() : m.refine;
  j["warnings"] = m.warnings;
  return j;
}

RunManifest manifest_from_json(const ojson& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.input_path = j.at("input").at("path").get<std::string>();
    m.input_digest = j.at("input").at("sha256").get<std::string>();
    m.config = j.at("config");
    m.document = j.value("document", ojson::object());
    for (const auto& [stage, status] : j.at("stages").items()) {
      m.stages[stage] = stage_status_from_string(status.get<std::string>());
    }
    if (j.contains("error")) m.failed_stage_error = j.at("error").get<std::string>();
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.push_back({a.at("name").get<std::string>(), a.at("stage").get<std::string>(),
                             a.at("sha256").get<std::string>()});
    }
    m.refine = j.value("refine", ojson::object());
    m.warnings = j.value("warnings", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest read_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / "manifest.json";
  if (!fs::is_regular_file(p)) throw FileNotFound("no manifest in " + run_dir.string());
  try {
    return manifest_from_json(ojson::parse(read_file(p)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest.json is not JSON: " + std::string(e.what()));
  }
}

std::vector<std::string> verify_manifest(const fs::path& run_dir, const RunManifest& m) {
  std::vector<std::string> problems;
  for (const auto& a : m.artifacts) {
    if (m.status(a.stage) != StageStatus::Done) continue;
    const fs::path p = run_dir / a.name;
    if (!fs::is_regular_file(p)) {
      problems.push_back(a.name + " is missing");
    } else if (file_sha256(p) != a.sha256) {
      problems.push_back(a.name + " does not match its digest");
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// generate

namespace {

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

class Run {
 public:
  Run(fs::path dir, RunManifest manifest) : dir_(std::move(dir)), m_(std::move(manifest)) {}

  RunManifest& manifest() { return m_; }
  const fs::path& dir() const { return dir_; }

  void save() const { write_file_atomic(dir_ / "manifest.json", manifest_to_json(m_).dump(2) + "\n"); }

  // A finished stage can be reused only if its artifacts are intact.
  bool reusable(std::string_view stage) const {
    if (m_.status(stage) != StageStatus::Done) return false;
    for (const auto& a : m_.artifacts) {
      if (a.stage != stage) continue;
      const fs::path p = dir_ / a.name;
      if (!fs::is_regular_file(p) || file_sha256(p) != a.sha256) return false;
    }
    return true;
  }

  void begin(std::string_view stage) {
    std::erase_if(m_.artifacts, [&](const ArtifactRecord& a) { return a.stage == stage; });
    const std::string prefix = std::string(stage) + ": ";
    std::erase_if(m_.warnings, [&](const std::string& w) { return w.starts_with(prefix); });
    m_.stages[std::string(stage)] = StageStatus::Pending;
    m_.failed_stage_error.reset();
  }

  void add(std::string_view stage, const std::string& name) {
    m_.artifacts.push_back({name, std::string(stage), file_sha256(dir_ / name)});
  }

  void write(std::string_view stage, const std::string& name, std::string_view bytes) {
    fs::create_directories((dir_ / name).parent_path());
    write_file_atomic(dir_ / name, bytes);
    add(stage, name);
  }

  void finish(std::string_view stage) {
    m_.stages[std::string(stage)] = StageStatus::Done;
    // Keep artifacts in pipeline order no matter which stages were reused.
    std::stable_sort(m_.artifacts.begin(), m_.artifacts.end(), [](const ArtifactRecord& a, const ArtifactRecord& b) {
      auto rank = [](const std::string& s) {
        return std::find(kStages.begin(), kStages.end(), s) - kStages.begin();
      };
      return rank(a.stage) < rank(b.stage);
    });
    save();
  }

  void fail(std::string_view stage, const std::string& what) {
    m_.stages[std::string(stage)] = StageStatus::Failed;
    m_.failed_stage_error = std::string(stage) + ": " + what;
    save();
  }

  // Later stages depend on earlier outputs, so rerunning one stage voids
  // everything after it.
  void invalidate_after(std::string_view stage) {
    bool after = false;
    for (auto s : kStages) {
      if (after) {
        m_.stages[std::string(s)] = StageStatus::Pending;
        std::erase_if(m_.artifacts, [&](const ArtifactRecord& a) { return a.stage == s; });
        const std::string prefix = std::string(s) + ": ";
        std::erase_if(m_.warnings, [&](const std::string& w) { return w.starts_with(prefix); });
      }
      if (s == stage) after = true;
    }
  }

 private:
  fs::path dir_;
  RunManifest m_;
};

fs::path choose_run_dir(const GenerateOptions& options, const std::string& digest) {
  if (options.run_dir) return *options.run_dir;
  const std::string base = utc_stamp() + "-" + digest.substr(0, 12);
  fs::path dir = options.out_root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = options.out_root / (base + "-" + std::to_string(k));
  return dir;
}

}  // namespace

GenerateResult generate(const fs::path& input, const Config& config, const GenerateOptions& options) {
  validate(config);
  if (options.stop_after &&
      std::find(kStages.begin(), kStages.end(), *options.stop_after) == kStages.end()) {
    throw ValidationError("unknown stage '" + *options.stop_after + "'");
  }
  if (!fs::is_regular_file(input)) throw FileNotFound("input not found: " + input.string());
  const DocFormat format = format_from_path(input);
  const std::string input_digest = file_sha256(input);
  const ojson snapshot = config_snapshot(config);

  const fs::path dir = choose_run_dir(options, sha256_hex(input_digest + snapshot.dump()));
  RunManifest fresh;
  fresh.run_id = dir.filename().string();
  fresh.input_path = fs::absolute(input).lexically_normal().string();
  fresh.input_digest = input_digest;
  fresh.config = snapshot;
  for (auto s : kStages) fresh.stages[std::string(s)] = StageStatus::Pending;

  if (fs::exists(dir / "manifest.json")) {
    RunManifest old = read_manifest(dir);
    if (old.input_digest != input_digest) throw ValidationError(dir.string() + " belongs to a different input");
    if (old.config != snapshot) throw ValidationError(dir.string() + " was started with a different config");
    old.input_path = fresh.input_path;
    fresh = std::move(old);
    spdlog::info("resuming run {}", fresh.run_id);
  }
  fs::create_directories(dir);
  Run run(dir, std::move(fresh));
  run.save();

  std::unique_ptr<Gateway> owned;
  Gateway* gw = options.gateway;
  if (gw == nullptr) {
    owned = build_gateway(config, config.gateway.cache_dir ? config.gateway.cache_dir : std::optional(dir / "cache"));
    gw = owned.get();
  }

  GenerateResult result;
  result.run_dir = dir;
  bool rerun_rest = false;

  // Each stage either reloads its outputs from disk or recomputes them.
  MethodSummary method;
  Category category = Category::Paper;
  RefineState state;
  Stage2Result stage2;
  const Stage2Options s2 = [&] {
    Stage2Options o = stage2_options(config);
    o.out_dir = dir;
    return o;
  }();

  auto stage = [&](std::string_view name, auto&& load, auto&& compute) {
    if (!rerun_rest && run.reusable(name)) {
      load();
      result.skipped.emplace_back(name);
      spdlog::info("stage {}: reused", name);
    } else {
      rerun_rest = true;
      run.invalidate_after(name);
      run.begin(name);
      spdlog::info("stage {}: running", name);
      try {
        compute();
      } catch (const Error& e) {
        run.fail(name, e.what());
        throw;
      } catch (const std::exception& e) {
        run.fail(name, e.what());
        throw;
      }
      run.finish(name);
      result.executed.emplace_back(name);
    }
    return options.stop_after && *options.stop_after == name;
  };

  auto stop = [&] {
    result.manifest = run.manifest();
    return result;
  };

  // --- ingest
  if (stage(
          "ingest",
          [&] {
            method = method_from_json(nlohmann::json::parse(read_file(dir / "method.json")));
            category = category_from_label(run.manifest().document.at("category").get<std::string>());
          },
          [&] {
            SourceDocument doc = load_document(input, format);
            category = classify_category(doc, *gw);
            doc.category = category;
            method = extract_method(doc, *gw);
            run.manifest().document = {{"id", doc.id},
                                       {"format", std::string(to_string(doc.format))},
                                       {"token_count", doc.token_count},
                                       {"category", std::string(to_string(category))}};
            run.write("ingest", "method.json", method_to_json(method).dump(2) + "\n");
          })) {
    return stop();
  }

  // --- refine
  if (stage(
          "refine",
          [&] { state = refine_state_from_json(nlohmann::json::parse(read_file(dir / "refine_state.json"))); },
          [&] {
            LoopHooks hooks;
            hooks.artifact_dir = dir;
            // A partial state left by an interrupted loop lets the loop pick
            // up where it stopped.
            Design initial;
            if (fs::is_regular_file(dir / "refine_partial.json")) {
              hooks.resume = refine_state_from_json(nlohmann::json::parse(read_file(dir / "refine_partial.json")));
              spdlog::info("refine: continuing from round {}", hooks.resume->iteration);
            } else {
              StyleDescriptor requested = requested_style(config);
              requested.category = category;
              initial = design_initial(method, *gw, requested);
            }
            hooks.on_progress = [&](const RefineState& s) {
              write_file_atomic(dir / "refine_partial.json", refine_state_to_json(s).dump(2) + "\n");
              spdlog::info("refine: round {} best {:.2f}", s.iteration, s.best_score);
            };
            state = run_loop(method, initial, *gw, *gw, refine_options(config), hooks);
            for (const auto& a : state.initial_artifacts) run.add("refine", a);
            for (const auto& h : state.history) {
              for (const auto& a : h.artifact_paths) run.add("refine", a);
            }
            run.write("refine", "refine_state.json", refine_state_to_json(state).dump(2) + "\n");
            fs::remove(dir / "refine_partial.json");
          })) {
    return stop();
  }
  run.manifest().refine = {{"initial_score", state.initial_score},
                           {"best_score", state.best_score},
                           {"rounds", state.iteration},
                           {"stop", state.stop ? std::string(to_string(*state.stop)) : std::string("none")}};

  // --- layout
  if (stage(
          "layout", [] {},
          [&] {
            run.write("layout", "layout.svg", serialize_svg(state.best_layout, state.best_style));
            run.write("layout", "layout.png", encode_png(render_layout(state.best_layout, config.pipeline.raster_scale)));
          })) {
    return stop();
  }

  // --- render
  if (stage(
          "render",
          [&] {
            std::string prompt = read_file(dir / "prompt.txt");
            if (!prompt.empty() && prompt.back() == '\n') prompt.pop_back();
            stage2.prompt = std::move(prompt);
            stage2.polished = read_png((dir / "polished.png").string());
          },
          [&] {
            stage2 = render_stage(state.best_layout, state.best_style, *gw, s2);
            for (const auto& a : stage2.artifacts) run.add("render", a);
            for (const auto& w : stage2.warnings) run.manifest().warnings.push_back("render: " + w);
          })) {
    return stop();
  }

  // --- text
  stage(
      "text", [] {},
      [&] {
        const std::size_t before = stage2.artifacts.size();
        const std::size_t warned = stage2.warnings.size();
        text_stage(stage2, state.best_layout, *gw, s2);
        for (std::size_t i = before; i < stage2.artifacts.size(); ++i) run.add("text", stage2.artifacts[i]);
        for (std::size_t i = warned; i < stage2.warnings.size(); ++i) {
          run.manifest().warnings.push_back("text: " + stage2.warnings[i]);
        }
      });
  run.save();
  return stop();
}

// ---------------------------------------------------------------------------
// batch

std::vector<fs::path> read_batch_list(const fs::path& list) {
  if (!fs::is_regular_file(list)) throw FileNotFound("batch list not found: " + list.string());
  std::vector<fs::path> out;
  for (const auto& line : split(read_file(list), '\n')) {
    const std::string t = trim(line);
    if (t.empty() || t.starts_with("#")) continue;
    out.push_back(resolve_against(t, list.parent_path()));
  }
  if (out.empty()) throw EmptyInput("batch list " + list.string() + " names no documents");
  return out;
}

std::vector<BatchEntry> run_batch(const std::vector<fs::path>& inputs, const Config& config, const fs::path& out_root,
                                  Gateway* gateway) {
  validate(config);
  fs::create_directories(out_root);
  std::unique_ptr<Gateway> owned;
  if (gateway == nullptr) {
    owned = build_gateway(config, config.gateway.cache_dir ? config.gateway.cache_dir
                                                            : std::optional(out_root / "cache"));
    gateway = owned.get();
  }
  std::vector<BatchEntry> entries(inputs.size());
  parallel_for(inputs.size(), config.pipeline.workers, [&](std::size_t i) {
    BatchEntry& e = entries[i];
    e.input = inputs[i];
    GenerateOptions o;
    // One subdirectory per list position keeps concurrent runs apart.
    o.run_dir = out_root / ("doc" + std::to_string(i) + "-" + inputs[i].stem().string());
    o.gateway = gateway;
    e.run_dir = *o.run_dir;
    try {
      generate(inputs[i], config, o);
    } catch (const Error& err) {
      e.exit_code = exit_code_for(err);
      e.error = err.what();
      spdlog::error("{}: {}", inputs[i].string(), err.what());
    } catch (const std::exception& err) {
      e.exit_code = 1;
      e.error = err.what();
      spdlog::error("{}: {}", inputs[i].string(), err.what());
    }
  });
  ojson summary = ojson::array();
  for (const auto& e : entries) {
    summary.push_back({{"input", e.input.string()},
                       {"run_dir", e.run_dir.string()},
                       {"exit_code", e.exit_code},
                       {"error", e.error}});
  }
  write_file_atomic(out_root / "batch_summary.json", summary.dump(2) + "\n");
  return entries;
}

// ---------------------------------------------------------------------------
// evaluate

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::Score: return "score";
    case EvalMode::Pairwise: return "pairwise";
    case EvalMode::Extended: return "extended";
  }
  return "score";
}

EvalMode eval_mode_from_string(std::string_view s) {
  for (auto m : {EvalMode::Score, EvalMode::Pairwise, EvalMode::Extended}) {
    if (to_string(m) == to_lower(trim(s))) return m;
  }
  throw ValidationError("mode must be score, pairwise or extended");
}

std::vector<EvalItem> read_eval_items(const fs::path& csv) {
  std::vector<EvalItem> items;
  const fs::path base = csv.parent_path();
  for (const CsvRow& row : read_csv(csv)) {
    EvalItem it;
    it.item_id = csv_field(row, "item_id", csv);
    it.method = csv_field(row, "method", csv);
    it.reference = resolve_against(csv_field(row, "reference", csv), base);
    it.generated = resolve_against(csv_field(row, "generated", csv), base);
    it.full_text = resolve_against(csv_field(row, "text", csv), base);
    items.push_back(std::move(it));
  }
  if (items.empty()) throw EmptyInput(csv.string() + " lists no items");
  return items;
}

std::uint64_t item_seed(std::uint64_t root_seed, std::size_t index) {
  std::uint64_t z = root_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

EvalReport evaluate(const std::vector<EvalItem>& items, EvalMode mode, std::uint64_t root_seed, Gateway& vision_model,
                    int workers) {
  if (items.empty()) throw EmptyInput("nothing to evaluate");
  for (const auto& it : items) {
    for (const auto& p : {it.reference, it.generated, it.full_text}) {
      if (!fs::is_regular_file(p)) throw FileNotFound("file not found: " + p.string());
    }
  }
  EvalReport report;
  report.mode = mode;
  report.root_seed = root_seed;
  report.rows.resize(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const EvalItem& it = items[i];
    EvalRow& row = report.rows[i];
    row.item = it;
    const std::string text = read_file(it.full_text);
    const Image reference = read_png(it.reference.string());
    const Image generated = read_png(it.generated.string());
    if (mode == EvalMode::Score) {
      row.score = referenced_score(text, reference, generated, vision_model);
    } else {
      const PairMode pm = mode == EvalMode::Extended ? PairMode::Extended : PairMode::Basic;
      row.verdict = pairwise_compare(text, reference, generated, item_seed(root_seed, i), pm, vision_model);
    }
  });
  return report;
}

std::string evaluation_csv(const EvalReport& report) {
  std::vector<std::string> header = {"item_id", "method"};
  for (auto k : kScoreKeys) header.emplace_back(k);
  header.insert(header.end(), {"overall", "order_seed", "presented_first", "decision"});
  std::string out = csv_line(header);
  for (const EvalRow& r : report.rows) {
    std::vector<std::string> f = {r.item.item_id, r.item.method};
    for (auto k : kScoreKeys) f.push_back(r.score ? format_fixed(r.score->sub_scores.at(std::string(k)), 2) : "");
    f.push_back(r.score ? format_fixed(r.score->overall, 4) : "");
    f.push_back(r.verdict ? std::to_string(r.verdict->order_seed) : "");
    f.push_back(r.verdict ? std::string(to_string(r.verdict->presented_order.first)) : "");
    f.push_back(r.verdict ? std::string(to_string(r.verdict->decision)) : "");
    out += csv_line(f);
  }
  return out;
}

ojson evaluation_summary(const EvalReport& report) {
  ojson j;
  j["mode"] = std::string(to_string(report.mode));
  j["root_seed"] = report.root_seed;
  j["items"] = report.rows.size();
  std::vector<std::string> methods;
  for (const auto& r : report.rows) {
    if (std::find(methods.begin(), methods.end(), r.item.method) == methods.end()) methods.push_back(r.item.method);
  }
  ojson by_method = ojson::object();
  if (report.mode == EvalMode::Score) {
    for (const auto& m : methods) {
      ojson entry;
      std::map<std::string, double> sums;
      double overall = 0;
      int n = 0;
      for (const auto& r : report.rows) {
        if (r.item.method != m) continue;
        for (const auto& [k, v] : r.score->sub_scores) sums[k] += v;
        overall += r.score->overall;
        ++n;
      }
      for (auto k : kScoreKeys) entry[std::string(k)] = round2(sums[std::string(k)] / n);
      entry["overall"] = round2(overall / n);
      entry["n"] = n;
      by_method[m] = std::move(entry);
    }
  } else {
    std::map<std::string, std::vector<PairwiseVerdict>> grouped;
    for (const auto& r : report.rows) grouped[r.item.method].push_back(*r.verdict);
    const WinRateTable table = aggregate_win_rates(grouped);
    for (const auto& m : methods) {
      const WinRateRow& row = table.at(m);
      ojson entry{{"win", row.win}, {"lose", row.lose}, {"good", row.good}, {"bad", row.bad},
                  {"tie", row.tie}, {"total", row.total()}, {"win_rate", row.win_rate}};
      // Per-criterion share of comparisons the generated figure won.
      ojson criteria = ojson::object();
      for (auto c : kPairwiseCriteria) {
        if (c == "overall") continue;
        int wins = 0;
        for (const auto& v : grouped.at(m)) {
          const bool ref_first = v.presented_order.first == Shown::Reference;
          if (derandomize(v.per_criterion.at(std::string(c)), ref_first) == Decision::Win) ++wins;
        }
        criteria[std::string(c)] = round2(static_cast<double>(wins) / static_cast<double>(grouped.at(m).size()));
      }
      entry["criteria"] = std::move(criteria);
      by_method[m] = std::move(entry);
    }
  }
  j["methods"] = std::move(by_method);
  return j;
}

void write_evaluation(const EvalReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "evaluation.csv", evaluation_csv(report));
  write_file_atomic(out_dir / "evaluation_summary.json", evaluation_summary(report).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// stats

namespace {

double number(const CsvRow& row, const std::string& column, const fs::path& source) {
  const std::string& s = csv_field(row, column, source);
  const auto v = parse_double(s);
  if (!v) throw ValidationError(source.string() + ": '" + s + "' in column " + column + " is not a number");
  return *v;
}

ojson averages_json(const StatsAverages& a, std::size_t n) {
  return {{"text_density", a.text_density},
          {"components", a.components},
          {"colors", a.colors},
          {"shapes", a.shapes},
          {"n", n}};
}

}  // namespace

std::vector<FigureRow> read_figure_rows(const fs::path& csv) {
  std::vector<FigureRow> rows;
  for (const CsvRow& r : read_csv(csv)) {
    FigureRow f;
    f.item_id = csv_field(r, "item_id", csv);
    if (auto it = r.find("category"); it != r.end()) f.category = it->second;
    // Each row goes through the same clamp-and-round rule as a model reply.
    const MeasuredFigure m = parse_figure_stats_reply(
        "text_density: " + csv_field(r, "text_density", csv) + "\ncomponents: " + csv_field(r, "components", csv) +
        "\ncolors: " + csv_field(r, "colors", csv) + "\nshapes: " + csv_field(r, "shapes", csv) + "\n");
    for (const auto& w : m.warnings) spdlog::warn("{} {}: {}", csv.string(), f.item_id, w);
    f.stats = m.stats;
    rows.push_back(std::move(f));
  }
  return rows;
}

std::vector<FigureRow> measure_directory(const fs::path& dir, Gateway& vision_model, std::vector<std::string>* warnings) {
  if (!fs::is_directory(dir)) throw FileNotFound("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && to_lower(e.path().extension().string()) == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FigureRow> rows;
  for (const auto& f : files) {
    const MeasuredFigure m = measure_figure(read_png(f.string()), vision_model);
    if (warnings) {
      for (const auto& w : m.warnings) warnings->push_back(f.filename().string() + ": " + w);
    }
    rows.push_back({f.stem().string(), "", m.stats});
  }
  if (rows.empty()) throw EmptyInput("no PNG figures in " + dir.string());
  return rows;
}

std::string figure_rows_csv(const std::vector<FigureRow>& rows) {
  std::string out = csv_line({"item_id", "category", "text_density", "components", "colors", "shapes"});
  for (const auto& r : rows) {
    out += csv_line({r.item_id, r.category, format_fixed(r.stats.text_density, 2), std::to_string(r.stats.components),
                     std::to_string(r.stats.colors), std::to_string(r.stats.shapes)});
  }
  return out;
}

ojson figures_summary(const std::vector<FigureRow>& rows, const std::string& convention) {
  std::vector<FigureStats> all;
  std::map<std::string, std::vector<FigureStats>> by_cat;
  for (const auto& r : rows) {
    all.push_back(r.stats);
    if (!r.category.empty()) by_cat[r.category].push_back(r.stats);
  }
  ojson j;
  j["text_density_convention"] = convention;
  j["average"] = averages_json(aggregate_stats(all), all.size());
  ojson cats = ojson::object();
  for (const auto& [c, v] : by_cat) cats[c] = averages_json(aggregate_stats(v), v.size());
  j["by_category"] = std::move(cats);
  return j;
}

ojson kappa_summary(const fs::path& csv) {
  std::vector<LabelPair> pairs;
  std::set<std::string> labels;
  for (const CsvRow& r : read_csv(csv)) {
    LabelPair p{csv_field(r, "item_id", csv), csv_field(r, "rater_a", csv), csv_field(r, "rater_b", csv)};
    if (p.rater_a.empty() || p.rater_b.empty()) throw ValidationError(csv.string() + ": item " + p.item_id + " lacks a rating");
    labels.insert(p.rater_a);
    labels.insert(p.rater_b);
    pairs.push_back(std::move(p));
  }
  std::size_t agree = 0;
  for (const auto& p : pairs) agree += p.rater_a == p.rater_b ? 1 : 0;
  ojson j;
  j["kappa"] = cohens_kappa(pairs);
  j["observed_agreement"] = static_cast<double>(agree) / static_cast<double>(pairs.size());
  j["n"] = pairs.size();
  j["labels"] = labels;
  return j;
}

ojson correlate_summary(const fs::path& csv) {
  std::vector<double> x, y;
  std::vector<std::string> groups;
  bool grouped = false;
  for (const CsvRow& r : read_csv(csv)) {
    x.push_back(number(r, "x", csv));
    y.push_back(number(r, "y", csv));
    if (auto it = r.find("group"); it != r.end()) {
      grouped = true;
      groups.push_back(it->second);
    }
  }
  const Correlations c = correlations(x, y, grouped ? &groups : nullptr);
  ojson j;
  j["pearson"] = c.pearson;
  j["spearman"] = c.spearman;
  j["kendall_tau_b"] = c.kendall_tau;
  j["mean_ranking_error"] = c.mean_ranking_error;
  j["n"] = x.size();
  j["grouped"] = grouped;
  return j;
}

}  // namespace figforge
