#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "figforge/error.hpp"
#include "figforge/refine.hpp"
#include "figforge/util.hpp"
#include "support/scripted.hpp"

using namespace figforge;
using namespace figforge::test_support;

namespace {

struct Rig {
  std::unique_ptr<Gateway> gw = quiet_gateway();
  std::shared_ptr<mock::ScriptedBackend> critic;
  std::shared_ptr<mock::FunctionBackend> designer;

  explicit Rig(const std::vector<double>& scores) : critic(scripted_critic(scores)) {
    designer = std::make_shared<mock::FunctionBackend>(
        [](const BackendRequest&) { return BackendReply{designer_reply(three_node_layout()), MediaKind::Text}; });
    gw->register_backend(Capability::Vision, critic);
    gw->register_backend(Capability::Text, designer);
  }

  Design initial() const { return {three_node_layout(), StyleDescriptor{}, 1}; }
};

// Deterministic, content-addressed mocks: the designer's layout depends on
// the feedback it is given and the critic's score on the markup it sees. Used
// where replays must not depend on call order.
struct HashRig {
  std::unique_ptr<Gateway> gw = quiet_gateway();

  HashRig() {
    gw->register_backend(Capability::Text, std::make_shared<mock::FunctionBackend>([](const BackendRequest& r) {
      const std::string h = sha256_hex(r.prompt);
      LayoutGraph g = three_node_layout();
      g.nodes[1].frame.y = 100 + std::stoi(h.substr(0, 2), nullptr, 16) % 200;
      return BackendReply{designer_reply(g), MediaKind::Text};
    }));
    gw->register_backend(Capability::Vision, std::make_shared<mock::FunctionBackend>([](const BackendRequest& r) {
      const std::string markup = r.prompt.substr(r.prompt.find("--- markup ---"));
      const double score = (std::stoi(sha256_hex(markup).substr(0, 4), nullptr, 16) % 900) / 100.0;
      return BackendReply{critic_reply(score, "move " + sha256_hex(markup).substr(0, 6)), MediaKind::Text};
    }));
  }
};

}  // namespace

TEST(Critique, Passthrough) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision,
                       std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{
                           "score: 6.0\nfeedback: nodes overlap\n```issues\noverlap | Encoder covers Input\n```\n"}));
  const CritiqueReport r = critique(three_node_layout(), StyleDescriptor{}, *gw);
  EXPECT_DOUBLE_EQ(r.score, 6.0);
  EXPECT_EQ(r.feedback, "nodes overlap");
  ASSERT_EQ(r.per_issue.size(), 1u);
  EXPECT_EQ(r.per_issue[0].kind, IssueKind::Overlap);
}

TEST(Critique, OutOfRangeScoreFailsAfterOneRepair) {
  auto gw = quiet_gateway();
  auto critic = scripted_critic({11.0});
  gw->register_backend(Capability::Vision, critic);
  EXPECT_THROW(critique(three_node_layout(), StyleDescriptor{}, *gw), SchemaError);
  EXPECT_EQ(critic->invocations(), 2);
}

TEST(Critique, EmptyFeedbackAllowedAtThreshold) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{"score: 9.0\n"}));
  const CritiqueReport r = critique(three_node_layout(), StyleDescriptor{}, *gw, 8.5);
  EXPECT_DOUBLE_EQ(r.score, 9.0);
  EXPECT_TRUE(r.feedback.empty());
  EXPECT_THROW(parse_critique_reply("score: 7\n", 8.5), SchemaError);
  EXPECT_NO_THROW(parse_critique_reply("score: 8.5\n", 8.5));
}

TEST(Critique, ReplyParsingIsLenient) {
  EXPECT_DOUBLE_EQ(parse_critique_reply("Score: 7.5/10\nFeedback: fine\n", 8.5).score, 7.5);
  EXPECT_THROW(parse_critique_reply("feedback: x\n", 8.5), SchemaError);
  EXPECT_THROW(parse_critique_reply("score: high\nfeedback: x\n", 8.5), SchemaError);
  EXPECT_THROW(parse_critique_reply("score: -1\nfeedback: x\n", 8.5), SchemaError);
  EXPECT_THROW(parse_critique_reply("score: 5\nfeedback: x\n```issues\ncolour | y\n```\n", 8.5), SchemaError);
}

TEST(Critique, PromptCarriesImageMarkupAndMetrics) {
  auto gw = quiet_gateway();
  BackendRequest seen;
  gw->register_backend(Capability::Vision, std::make_shared<mock::FunctionBackend>([&](const BackendRequest& r) {
    seen = r;
    return BackendReply{critic_reply(7.0), MediaKind::Text};
  }));
  critique(three_node_layout(), StyleDescriptor{}, *gw);
  ASSERT_EQ(seen.images.size(), 1u);
  EXPECT_EQ(seen.images[0], render_layout(three_node_layout(), 1.0));
  EXPECT_NE(seen.prompt.find("data-id=\"b\""), std::string::npos);
  EXPECT_NE(seen.prompt.find("overlap_area: 0.00"), std::string::npos);
  EXPECT_NE(seen.prompt.find("balance: "), std::string::npos);
}

TEST(Regenerate, Passthrough) {
  Rig rig({7.0});
  const Design d = regenerate(small_method(), "nodes overlap", *rig.gw);
  EXPECT_EQ(d.layout, three_node_layout());
  EXPECT_EQ(d.style.style_text, "flat pastel");
  EXPECT_EQ(d.attempts, 1);
}

TEST(Regenerate, RepairsInvalidLayoutOnce) {
  LayoutGraph bad = three_node_layout();
  std::string broken = designer_reply(bad);
  const auto pos = broken.find("data-target=\"c\"");
  broken.replace(pos, 16, "data-target=\"zz\"");
  auto gw = quiet_gateway();
  auto designer = std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{broken, designer_reply(bad)});
  gw->register_backend(Capability::Text, designer);
  const Design d = regenerate(small_method(), "x", *gw);
  EXPECT_EQ(d.attempts, 2);
  EXPECT_EQ(d.layout, bad);
  // The repair prompt quotes the problem.
  EXPECT_NE(designer->prompts()[1].find("zz"), std::string::npos);

  auto gw2 = quiet_gateway();
  gw2->register_backend(Capability::Text, std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{broken}));
  EXPECT_THROW(regenerate(small_method(), "x", *gw2), SchemaError);
}

TEST(Regenerate, PromptCarriesMethodAndFeedback) {
  const std::string p = design_prompt(small_method(), StyleDescriptor{}, "nodes overlap");
  EXPECT_NE(p.find("Encoder"), std::string::npos);
  EXPECT_NE(p.find("nodes overlap"), std::string::npos);
  EXPECT_NE(p.find(std::string(kDefaultStyle)), std::string::npos);
  EXPECT_NE(design_prompt(small_method(), StyleDescriptor{}, "").find("first draft"), std::string::npos);
}

TEST(Loop, ZeroIterationsKeepsInitial) {
  Rig rig({6.0});
  RefineOptions o;
  o.max_iterations = 0;
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw, o);
  EXPECT_EQ(s.best_layout, three_node_layout());
  EXPECT_DOUBLE_EQ(s.best_score, 6.0);
  EXPECT_EQ(rig.designer->invocations(), 0);
  EXPECT_EQ(s.stop, StopReason::Budget);
}

TEST(Loop, ScriptedScoreSequence) {
  Rig rig({6.0, 7.0, 6.5, 8.6});
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw);
  ASSERT_EQ(s.history.size(), 3u);
  EXPECT_TRUE(s.history[0].accepted);
  EXPECT_FALSE(s.history[1].accepted);
  EXPECT_TRUE(s.history[2].accepted);
  EXPECT_DOUBLE_EQ(s.best_score, 8.6);
  EXPECT_EQ(rig.designer->invocations(), 3);
  EXPECT_EQ(rig.critic->invocations(), 4);
  EXPECT_EQ(s.stop, StopReason::Threshold);
}

TEST(Loop, ImmediateThreshold) {
  Rig rig({9.0});
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw);
  EXPECT_EQ(rig.designer->invocations(), 0);
  EXPECT_EQ(s.stop, StopReason::Threshold);
  EXPECT_TRUE(s.history.empty());
}

TEST(Loop, ConvergesOnNearTie) {
  Rig rig({6.0, 6.02});
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw);
  // 6.02 > 6.0 is accepted; the next 6.02 is rejected within epsilon.
  ASSERT_EQ(s.history.size(), 2u);
  EXPECT_EQ(s.stop, StopReason::Converged);
  EXPECT_DOUBLE_EQ(s.best_score, 6.02);
}

TEST(Loop, TiesKeepEarlierCandidate) {
  Rig rig({5.0, 7.0, 7.0});
  RefineOptions o;
  o.epsilon = 0;  // disable convergence so the tie is visible
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw, o);
  ASSERT_EQ(s.history.size(), 5u);
  EXPECT_TRUE(s.history[0].accepted);
  for (std::size_t i = 1; i < s.history.size(); ++i) EXPECT_FALSE(s.history[i].accepted);
  EXPECT_EQ(s.stop, StopReason::Budget);
}

TEST(Loop, RandomizedScriptsKeepInvariants) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> score(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng() % 7);
    std::vector<double> scores;
    for (int i = 0; i < 8; ++i) scores.push_back(std::round(score(rng) * 100) / 100);
    Rig rig(scores);
    RefineOptions o;
    o.max_iterations = n;
    o.raster_scale = 0.25;
    const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw, o);
    EXPECT_LE(rig.designer->invocations(), n);
    EXPECT_LE(rig.critic->invocations(), n + 1);
    double best = s.initial_score;
    for (const HistoryEntry& h : s.history) {
      EXPECT_EQ(h.accepted, h.candidate_score > best);
      best = std::max(best, h.candidate_score);
    }
    EXPECT_DOUBLE_EQ(s.best_score, best);
    const bool any_high = std::any_of(scores.begin(), scores.begin() + std::min<std::size_t>(n + 1, scores.size()),
                                      [&](double v) { return v >= o.threshold; });
    if (s.stop == StopReason::Threshold) EXPECT_GE(s.best_score, o.threshold);
    if (!any_high) EXPECT_NE(s.stop, StopReason::Threshold);
  }
}

TEST(Loop, PersistsIterationArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "figforge_refine_artifacts";
  std::filesystem::remove_all(dir);
  Rig rig({6.0, 7.0, 6.5, 8.6});
  LoopHooks hooks;
  hooks.artifact_dir = dir;
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw, {}, hooks);
  for (int i = 0; i <= 3; ++i) {
    EXPECT_TRUE(std::filesystem::exists(dir / "iterations" / ("iteration_" + std::to_string(i) + ".svg")));
    EXPECT_TRUE(std::filesystem::exists(dir / "iterations" / ("iteration_" + std::to_string(i) + ".png")));
    EXPECT_TRUE(std::filesystem::exists(dir / "iterations" / ("critique_" + std::to_string(i) + ".json")));
  }
  EXPECT_EQ(s.history[2].artifact_paths.front(), "iterations/iteration_3.svg");
  std::filesystem::remove_all(dir);
}

TEST(Loop, ResumeReproducesFinalState) {
  RefineOptions o;
  o.threshold = 9.5;
  o.epsilon = 0;
  HashRig full;
  const RefineState expected = run_loop(small_method(), {three_node_layout(), {}, 1}, *full.gw, *full.gw, o);
  ASSERT_EQ(expected.history.size(), 5u);

  // Stop after two rounds, persist through JSON, resume with fresh mocks.
  HashRig first;
  std::optional<RefineState> snapshot;
  LoopHooks hooks;
  hooks.on_progress = [&](const RefineState& s) {
    if (s.iteration == 2 && !snapshot) snapshot = s;
  };
  run_loop(small_method(), {three_node_layout(), {}, 1}, *first.gw, *first.gw, o, hooks);
  ASSERT_TRUE(snapshot);
  HashRig second;
  LoopHooks resume;
  resume.resume = refine_state_from_json(refine_state_to_json(*snapshot));
  const RefineState resumed = run_loop(small_method(), {three_node_layout(), {}, 1}, *second.gw, *second.gw, o, resume);
  EXPECT_EQ(resumed, expected);
}

TEST(Loop, StateJsonRoundTrip) {
  Rig rig({6.0, 7.0, 6.5, 8.6});
  const RefineState s = run_loop(small_method(), rig.initial(), *rig.gw, *rig.gw);
  EXPECT_EQ(refine_state_from_json(refine_state_to_json(s)), s);
  EXPECT_THROW(refine_state_from_json(nlohmann::json::object()), ValidationError);
}

TEST(Loop, ErrorsCarryPartialState) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Text, std::make_shared<mock::FunctionBackend>([](const BackendRequest&) {
    return BackendReply{designer_reply(three_node_layout()), MediaKind::Text};
  }));
  gw->register_backend(Capability::Vision, std::make_shared<mock::ScriptedBackend>(std::vector<mock::ScriptedBackend::Step>{
                                               mock::ScriptedBackend::reply(critic_reply(5.0)),
                                               mock::ScriptedBackend::reply(critic_reply(6.0)),
                                               mock::ScriptedBackend::permanent()}));
  try {
    run_loop(small_method(), {three_node_layout(), {}, 1}, *gw, *gw);
    FAIL() << "expected RefineInterrupted";
  } catch (const RefineInterrupted& e) {
    EXPECT_EQ(e.partial().iteration, 1);
    EXPECT_DOUBLE_EQ(e.partial().best_score, 6.0);
    EXPECT_EQ(exit_code_for(e), 3);
    EXPECT_THROW(e.rethrow_cause(), BackendRejected);
  }
}

TEST(Options, Validation) {
  RefineOptions o;
  o.threshold = 12;
  EXPECT_THROW(validate(o), ValidationError);
  o = {};
  o.max_iterations = -1;
  EXPECT_THROW(validate(o), ValidationError);
  o = {};
  o.epsilon = -0.1;
  EXPECT_THROW(validate(o), ValidationError);
  EXPECT_NO_THROW(validate(RefineOptions{}));
}
