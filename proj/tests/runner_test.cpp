#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "figforge/config.hpp"
#include "figforge/csv.hpp"
#include "figforge/error.hpp"
#include "figforge/glyphs.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/runner.hpp"
#include "figforge/util.hpp"

namespace fs = std::filesystem;
using namespace figforge;

namespace {

const fs::path kFixtures = FIGFORGE_FIXTURES;

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("figforge_runner_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Config mock_config() {
  Config c;
  c.gateway.base_delay_ms = 0;
  c.backends[Capability::Ocr].ocr_drop_first_char_every = 2;
  return c;
}

GenerateResult run_into(const fs::path& dir, const Config& c = mock_config(), std::optional<std::string> stop = {}) {
  GenerateOptions o;
  o.run_dir = dir;
  o.stop_after = std::move(stop);
  return generate(kFixtures / "method.md", c, o);
}

std::vector<std::string> names(const RunManifest& m) {
  std::vector<std::string> out;
  for (const auto& a : m.artifacts) out.push_back(a.name);
  return out;
}

}  // namespace

// --- config ----------------------------------------------------------------

TEST(Config, ParsesSectionsAndDefaults) {
  const Config c = parse_config(R"(
seed = 7
[pipeline]
iterations = 3
threshold = 8.0
style = "ink wash"
skip_text_refinement = true
[judge]
mode = "extended"
[backends.ocr]
kind = "mock"
ocr_drop_first_char_every = 3
[backends.text]
kind = "http"
endpoint = "https://api.example.test/v1/chat"
model = "m"
auth_env = "FIGFORGE_KEY"
)");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.pipeline.iterations, 3);
  EXPECT_DOUBLE_EQ(c.pipeline.threshold, 8.0);
  EXPECT_DOUBLE_EQ(c.pipeline.epsilon, 0.05);
  EXPECT_TRUE(c.pipeline.skip_text_refinement);
  EXPECT_EQ(c.judge.mode, "extended");
  EXPECT_EQ(c.backend(Capability::Ocr).ocr_drop_first_char_every, 3);
  EXPECT_EQ(c.backend(Capability::Vision).kind, "mock");
  EXPECT_NO_THROW(validate(c));
  const auto snap = config_snapshot(c);
  EXPECT_EQ(snap["pipeline"]["style"], "ink wash");
  EXPECT_EQ(snap["backends"]["text"]["auth_env"], "FIGFORGE_KEY");
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(parse_config("[pipeline]\niteratons = 3\n"), ValidationError);
  EXPECT_THROW(parse_config("[pipeline]\niterations = \"3\"\n"), ValidationError);
  EXPECT_THROW(parse_config("[backends.painter]\nkind = \"mock\"\n"), ValidationError);
  EXPECT_THROW(parse_config("[pipeline\n"), ValidationError);
}

TEST(Config, ValidationRanges) {
  Config c;
  c.pipeline.threshold = 12;
  EXPECT_THROW(validate(c), ValidationError);
  c = Config{};
  c.judge.mode = "bogus";
  EXPECT_THROW(validate(c), ValidationError);
  c = Config{};
  c.backends[Capability::Text].kind = "http";
  EXPECT_THROW(validate(c), ValidationError);
  c.backends[Capability::Text].endpoint = "ftp://x";
  c.backends[Capability::Text].model = "m";
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Config, InvalidThresholdFailsBeforeAnyBackendCall) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  Gateway gw(GatewayOptions{});
  for (Capability cap : kAllCapabilities) {
    gw.register_backend(cap, std::make_shared<mock::FunctionBackend>([calls](const BackendRequest&) {
                          ++*calls;
                          return BackendReply{};
                        }));
  }
  Config c = mock_config();
  c.pipeline.threshold = 12;
  const fs::path dir = fresh_dir("invalid");
  GenerateOptions o;
  o.run_dir = dir / "run";
  o.gateway = &gw;
  try {
    generate(kFixtures / "method.md", c, o);
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(exit_code_for(e), 2);
  }
  EXPECT_EQ(calls->load(), 0);
  EXPECT_FALSE(fs::exists(dir / "run"));
}

// --- csv -------------------------------------------------------------------

TEST(Csv, QuotedFieldsAndRoundTrip) {
  const auto rows = parse_csv("a,b\n\"x, y\",\"say \"\"hi\"\"\"\r\n\n1,\"two\nlines\"\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "x, y");
  EXPECT_EQ(rows[1][1], "say \"hi\"");
  EXPECT_EQ(rows[2][1], "two\nlines");
  const auto again = parse_csv(csv_line(rows[1]) + csv_line(rows[2]));
  EXPECT_EQ(again[0], rows[1]);
  EXPECT_EQ(again[1], rows[2]);
  EXPECT_THROW(parse_csv("\"open"), ValidationError);
}

TEST(Csv, ShortRowsAndMissingColumns) {
  const fs::path dir = fresh_dir("csv");
  write_file_atomic(dir / "short.csv", "a,b,c\n1,2\n");
  EXPECT_THROW(read_csv(dir / "short.csv"), ValidationError);
  write_file_atomic(dir / "ok.csv", "a,b\n1,2\n");
  const auto rows = read_csv(dir / "ok.csv");
  EXPECT_THROW(csv_field(rows[0], "z", dir / "ok.csv"), ValidationError);
  EXPECT_THROW(read_csv(dir / "missing.csv"), FileNotFound);
}

// --- generate --------------------------------------------------------------

TEST(Generate, FullMockRunProducesTheArtifactChain) {
  const fs::path dir = fresh_dir("full");
  const auto res = run_into(dir / "run");
  const RunManifest& m = res.manifest;
  EXPECT_TRUE(m.complete());
  EXPECT_GE(m.artifacts.size(), 10u);
  EXPECT_TRUE(verify_manifest(res.run_dir, m).empty());

  const auto n = names(m);
  auto pos = [&](const std::string& name) {
    const auto it = std::find(n.begin(), n.end(), name);
    EXPECT_NE(it, n.end()) << name;
    return it - n.begin();
  };
  const std::vector<std::string> chain = {"method.json", "iterations/iteration_0.svg", "layout.svg", "layout.png",
                                          "prompt.txt", "polished.png", "library.json", "corrected_library.json",
                                          "erased.png", "final.png"};
  for (std::size_t i = 1; i < chain.size(); ++i) EXPECT_LT(pos(chain[i - 1]), pos(chain[i])) << chain[i];

  // The manifest on disk is the one returned, and names are relative.
  const RunManifest disk = read_manifest(res.run_dir);
  EXPECT_EQ(disk.artifacts, m.artifacts);
  for (const auto& a : m.artifacts) EXPECT_FALSE(fs::path(a.name).is_absolute());
  EXPECT_EQ(m.document["category"], "Paper");
  EXPECT_TRUE(m.refine.contains("best_score"));
  EXPECT_EQ(m.config, config_snapshot(mock_config()));
}

TEST(Generate, TwoRunsAreDigestIdentical) {
  const fs::path dir = fresh_dir("twice");
  const auto a = run_into(dir / "a");
  const auto b = run_into(dir / "b");
  EXPECT_EQ(a.manifest.artifacts, b.manifest.artifacts);
}

TEST(Generate, RerunOfCompleteRunSkipsEverything) {
  const fs::path dir = fresh_dir("rerun");
  const auto first = run_into(dir / "run");
  const auto second = run_into(dir / "run");
  EXPECT_TRUE(second.executed.empty());
  EXPECT_EQ(second.skipped.size(), kStages.size());
  EXPECT_EQ(second.manifest.artifacts, first.manifest.artifacts);
}

TEST(Generate, KilledAtRenderResumesToTheSameManifest) {
  const fs::path dir = fresh_dir("resume");
  const auto reference = run_into(dir / "reference");

  Config c = mock_config();
  auto gw = build_gateway(c, dir / "killed" / "cache", [](std::chrono::milliseconds) {});
  gw->register_backend(Capability::TextToImage,
                       std::make_shared<mock::FunctionBackend>([](const BackendRequest&) -> BackendReply {
                         throw PermanentFailure("renderer offline");
                       }));
  GenerateOptions o;
  o.run_dir = dir / "killed";
  o.gateway = gw.get();
  EXPECT_THROW(generate(kFixtures / "method.md", c, o), BackendError);
  const RunManifest partial = read_manifest(dir / "killed");
  EXPECT_EQ(partial.status("render"), StageStatus::Failed);
  EXPECT_EQ(partial.status("layout"), StageStatus::Done);
  ASSERT_TRUE(partial.failed_stage_error.has_value());

  const auto resumed = run_into(dir / "killed");
  EXPECT_EQ(resumed.skipped, (std::vector<std::string>{"ingest", "refine", "layout"}));
  EXPECT_EQ(resumed.executed, (std::vector<std::string>{"render", "text"}));
  EXPECT_EQ(resumed.manifest.artifacts, reference.manifest.artifacts);
  EXPECT_FALSE(resumed.manifest.failed_stage_error.has_value());
  EXPECT_EQ(resumed.manifest.warnings, reference.manifest.warnings);
}

TEST(Generate, StopAfterThenContinue) {
  const fs::path dir = fresh_dir("stop");
  const auto reference = run_into(dir / "reference");
  const auto half = run_into(dir / "run", mock_config(), "refine");
  EXPECT_EQ(half.manifest.status("layout"), StageStatus::Pending);
  EXPECT_FALSE(fs::exists(dir / "run" / "layout.svg"));
  const auto rest = run_into(dir / "run");
  EXPECT_EQ(rest.skipped, (std::vector<std::string>{"ingest", "refine"}));
  EXPECT_EQ(rest.manifest.artifacts, reference.manifest.artifacts);
}

TEST(Generate, TamperedArtifactForcesRerunFromItsStage) {
  const fs::path dir = fresh_dir("tamper");
  const auto first = run_into(dir / "run");
  write_file_atomic(dir / "run" / "layout.png", "not a png");
  EXPECT_FALSE(verify_manifest(dir / "run", read_manifest(dir / "run")).empty());
  const auto again = run_into(dir / "run");
  EXPECT_EQ(again.skipped, (std::vector<std::string>{"ingest", "refine"}));
  EXPECT_EQ(again.manifest.artifacts, first.manifest.artifacts);
}

TEST(Generate, ForeignRunDirectoryIsRejected) {
  const fs::path dir = fresh_dir("foreign");
  run_into(dir / "run", mock_config(), "ingest");
  Config other = mock_config();
  other.pipeline.iterations = 2;
  EXPECT_THROW(run_into(dir / "run", other), ValidationError);
}

TEST(Generate, SkipTextRefinementWritesPolishedAsFinal) {
  const fs::path dir = fresh_dir("skip");
  Config c = mock_config();
  c.pipeline.skip_text_refinement = true;
  const auto res = run_into(dir / "run", c);
  EXPECT_EQ(read_file(dir / "run" / "final.png"), read_file(dir / "run" / "polished.png"));
  const auto n = names(res.manifest);
  EXPECT_EQ(std::count(n.begin(), n.end(), "library.json"), 0);
}

TEST(Generate, FreshRunDirectoryUnderOutRoot) {
  const fs::path dir = fresh_dir("fresh");
  GenerateOptions o;
  o.out_root = dir;
  o.stop_after = "ingest";
  const auto res = generate(kFixtures / "method.md", mock_config(), o);
  EXPECT_EQ(res.run_dir.parent_path(), dir);
  EXPECT_EQ(res.manifest.run_id, res.run_dir.filename().string());
  EXPECT_TRUE(fs::exists(res.run_dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(res.run_dir / "cache"));
}

TEST(Generate, MissingInputAndUnknownStage) {
  EXPECT_THROW(generate(kFixtures / "nope.md", mock_config(), {}), FileNotFound);
  GenerateOptions o;
  o.stop_after = "paint";
  EXPECT_THROW(generate(kFixtures / "method.md", mock_config(), o), ValidationError);
}

TEST(Batch, RunsEachDocumentAndRecordsFailures) {
  const fs::path dir = fresh_dir("batch");
  write_file_atomic(dir / "list.txt", (kFixtures / "method.md").string() + "\n# comment\n\nmissing.md\n");
  const auto inputs = read_batch_list(dir / "list.txt");
  ASSERT_EQ(inputs.size(), 2u);
  EXPECT_EQ(inputs[1], dir / "missing.md");
  const auto entries = run_batch(inputs, mock_config(), dir / "out");
  EXPECT_EQ(entries[0].exit_code, 0);
  EXPECT_EQ(entries[1].exit_code, 2);
  EXPECT_TRUE(read_manifest(entries[0].run_dir).complete());
  const auto summary = nlohmann::json::parse(read_file(dir / "out" / "batch_summary.json"));
  EXPECT_EQ(summary.size(), 2u);
  EXPECT_EQ(read_batch_list(kFixtures / "batch.txt").front(), kFixtures / "method.md");
}

// --- evaluate --------------------------------------------------------------

namespace {

fs::path eval_fixture(const std::string& name) {
  const fs::path dir = fresh_dir("eval_" + name);
  Image reference(200, 120);
  reference.fill_box({20, 20, 60, 40}, {200, 120, 90});
  reference.fill_box({120, 60, 60, 40}, {90, 120, 200});
  glyphs::draw(reference, "Input", {20, 20, 60, 40}, kBlack);
  Image same = reference;
  Image plain(200, 120);
  plain.fill_box({20, 20, 60, 40}, {200, 120, 90});
  write_png((dir / "reference.png").string(), reference);
  write_png((dir / "same.png").string(), same);
  write_png((dir / "plain.png").string(), plain);
  write_file_atomic(dir / "paper.txt", "Input flows to Output.");
  std::string csv = "item_id,method,reference,generated,text\n";
  for (int i = 0; i < 6; ++i) {
    csv += "p" + std::to_string(i) + ",ours,reference.png," + (i % 2 ? "same.png" : "plain.png") + ",paper.txt\n";
    csv += "p" + std::to_string(i) + ",baseline,reference.png,plain.png,paper.txt\n";
  }
  write_file_atomic(dir / "items.csv", csv);
  return dir;
}

}  // namespace

TEST(Evaluate, ScoreModeOverallIsTheMeanOfEightSubScores) {
  const fs::path dir = eval_fixture("score");
  auto gw = build_gateway(mock_config(), std::nullopt);
  const auto report = evaluate(read_eval_items(dir / "items.csv"), EvalMode::Score, 1, *gw, 3);
  write_evaluation(report, dir / "out");
  const auto rows = read_csv(dir / "out" / "evaluation.csv");
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& row : rows) {
    double sum = 0;
    for (auto k : kScoreKeys) sum += std::stod(row.at(std::string(k)));
    EXPECT_NEAR(std::stod(row.at("overall")), sum / 8.0, 0.006);
    EXPECT_TRUE(row.at("decision").empty());
  }
  EXPECT_EQ(rows[1].at("item_id"), "p0");
  EXPECT_EQ(rows[1].at("method"), "baseline");
  const auto summary = nlohmann::json::parse(read_file(dir / "out" / "evaluation_summary.json"));
  EXPECT_EQ(summary["methods"]["ours"]["n"], 6);
}

TEST(Evaluate, PairwiseWithFixedSeedIsReproducible) {
  const fs::path dir = eval_fixture("pairwise");
  const auto items = read_eval_items(dir / "items.csv");
  auto gw1 = build_gateway(mock_config(), std::nullopt);
  auto gw2 = build_gateway(mock_config(), std::nullopt);
  const auto a = evaluate(items, EvalMode::Pairwise, 42, *gw1, 1);
  const auto b = evaluate(items, EvalMode::Pairwise, 42, *gw2, 4);
  EXPECT_EQ(evaluation_csv(a), evaluation_csv(b));
  EXPECT_EQ(evaluation_summary(a).dump(), evaluation_summary(b).dump());
  const auto c = evaluate(items, EvalMode::Pairwise, 43, *gw1, 1);
  EXPECT_NE(evaluation_csv(a), evaluation_csv(c));  // seeds show up in the report
  const auto s = evaluation_summary(a);
  EXPECT_EQ(s["methods"]["baseline"]["total"], 6);
}

TEST(Evaluate, ExtendedDecisionsNeverTie) {
  const fs::path dir = eval_fixture("extended");
  auto gw = build_gateway(mock_config(), std::nullopt);
  const auto report = evaluate(read_eval_items(dir / "items.csv"), EvalMode::Extended, 9, *gw, 2);
  write_evaluation(report, dir / "out");
  const std::set<std::string> allowed = {"Win", "Lose", "BothGood", "BothBad"};
  for (const auto& row : read_csv(dir / "out" / "evaluation.csv")) {
    EXPECT_TRUE(allowed.contains(row.at("decision"))) << row.at("decision");
  }
}

TEST(Evaluate, ItemSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < 1000; ++i) seen.insert(item_seed(5, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(item_seed(5, 3), item_seed(5, 3));
  EXPECT_NE(item_seed(5, 3), item_seed(6, 3));
}

TEST(Evaluate, InputErrors) {
  const fs::path dir = fresh_dir("eval_errors");
  write_file_atomic(dir / "items.csv", "item_id,method,reference,generated,text\nx,m,a.png,b.png,t.txt\n");
  auto gw = build_gateway(mock_config(), std::nullopt);
  EXPECT_THROW(evaluate(read_eval_items(dir / "items.csv"), EvalMode::Score, 1, *gw), FileNotFound);
  EXPECT_THROW(evaluate({}, EvalMode::Score, 1, *gw), EmptyInput);
  EXPECT_THROW(eval_mode_from_string("ranked"), ValidationError);
  EXPECT_EQ(eval_mode_from_string(" Extended "), EvalMode::Extended);
}

// --- stats -----------------------------------------------------------------

TEST(StatsCommand, FiguresFixtureAverage) {
  const auto rows = read_figure_rows(kFixtures / "human_audit.csv");
  ASSERT_EQ(rows.size(), 21u);
  const auto s = figures_summary(rows, "percent");
  EXPECT_NEAR(s["average"]["text_density"].get<double>(), 54.29, 0.005);
  EXPECT_NEAR(s["average"]["components"].get<double>(), 5.62, 0.005);
  EXPECT_NEAR(s["average"]["colors"].get<double>(), 7.29, 0.005);
  EXPECT_NEAR(s["average"]["shapes"].get<double>(), 5.29, 0.005);
  EXPECT_EQ(s["text_density_convention"], "percent");
}

TEST(StatsCommand, MeasureDirectoryRoundTripsThroughCsv) {
  const fs::path dir = fresh_dir("measure");
  Image img(160, 100);
  img.fill_box({10, 10, 50, 30}, {200, 80, 80});
  img.fill_box({90, 50, 50, 30}, {80, 80, 200});
  write_png((dir / "b.png").string(), img);
  write_png((dir / "a.png").string(), Image(50, 50));
  auto gw = build_gateway(mock_config(), std::nullopt);
  const auto rows = measure_directory(dir, *gw);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].item_id, "a");
  EXPECT_EQ(rows[1].stats.colors, 2);
  write_file_atomic(dir / "rows.csv", figure_rows_csv(rows));
  const auto back = read_figure_rows(dir / "rows.csv");
  EXPECT_EQ(back[1].stats.colors, rows[1].stats.colors);
  EXPECT_EQ(back[1].stats.components, rows[1].stats.components);
  EXPECT_THROW(measure_directory(dir / "nope", *gw), FileNotFound);
}

TEST(StatsCommand, KappaPerfectAgreement) {
  const auto s = kappa_summary(kFixtures / "kappa_perfect.csv");
  EXPECT_DOUBLE_EQ(s["kappa"].get<double>(), 1.0);
  EXPECT_EQ(s["n"], 6);
}

TEST(StatsCommand, CorrelateIdentity) {
  const auto s = correlate_summary(kFixtures / "correlate_identity.csv");
  EXPECT_NEAR(s["pearson"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(s["spearman"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(s["kendall_tau_b"].get<double>(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(s["mean_ranking_error"].get<double>(), 0.0);
}

TEST(StatsCommand, NonNumericValueIsAValidationError) {
  const fs::path dir = fresh_dir("corr_bad");
  write_file_atomic(dir / "c.csv", "item_id,x,y\na,1,2\nb,two,3\n");
  EXPECT_THROW(correlate_summary(dir / "c.csv"), ValidationError);
}

TEST(Config, ExampleFileValidates) {
  const Config c = load_config(kFixtures / "example.toml");
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.backend(Capability::Text).kind, "http");
  EXPECT_EQ(c.backend(Capability::Vision).command, "./bin/vision-critic");
  EXPECT_FALSE(config_snapshot(c).dump().empty());
  EXPECT_THROW(load_config(kFixtures / "absent.toml"), FileNotFound);
}
