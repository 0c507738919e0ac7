#include <gtest/gtest.h>

#include <random>

#include "figforge/error.hpp"
#include "figforge/judge.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/mock_models.hpp"
#include "support/scripted.hpp"

using namespace figforge;
using figforge::test_support::quiet_gateway;

namespace {

std::string score_lines(const std::vector<double>& scores, const std::string& skip = "") {
  std::string out;
  for (std::size_t i = 0; i < kScoreKeys.size(); ++i) {
    if (kScoreKeys[i] == skip) continue;
    std::ostringstream line;
    line << kScoreKeys[i] << ": " << scores[i] << " | reason " << i << "\n";
    out += line.str();
  }
  return out;
}

std::string pairwise_lines(const std::string& criteria, const std::string& overall) {
  std::string out;
  for (auto c : kPairwiseCriteria) {
    out += std::string(c) + ": " + (c == "overall" ? overall : criteria) + "\n";
  }
  return out;
}

std::uint64_t seed_with_order(bool reference_first_wanted) {
  for (std::uint64_t s = 0;; ++s) {
    if (reference_first(s) == reference_first_wanted) return s;
  }
}

// Two images the heuristic judge can tell apart: one has more colours.
std::pair<Image, Image> plain_and_rich() {
  Image plain(40, 20, kWhite);
  Image rich(40, 20, kWhite);
  rich.fill_box({0, 0, 10, 10}, {200, 10, 10});
  rich.fill_box({10, 0, 10, 10}, {10, 200, 10});
  return {plain, rich};
}

}  // namespace

// --- referenced scoring ----------------------------------------------------

TEST(Score, ConstantScoresAverageToThemselves) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision,
                       std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{score_lines(std::vector(8, 8.0))}));
  const auto card = referenced_score("doc", Image(4, 4), Image(4, 4), *gw);
  EXPECT_DOUBLE_EQ(card.overall, 8.0);
  EXPECT_EQ(card.reasoning.at("flow"), "reason 4");
}

TEST(Score, PublishedBlogSubScoresGiveTheirOverall) {
  const std::vector<double> s = {7.53, 7.25, 7.44, 8.04, 8.38, 7.32, 6.65, 8.23};
  const auto card = parse_score_reply(score_lines(s));
  // The exact decimal mean is 7.605; the published figure rounds to 7.60.
  // The binary sum lands a hair above 7.605, hence the 1e-9 slack.
  EXPECT_NEAR(card.overall, 7.60, 0.005 + 1e-9);
}

TEST(Score, OverallIsTheMeanForRandomCards) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 200; ++i) {
    std::map<std::string, double> m;
    double sum = 0;
    for (auto k : kScoreKeys) {
      m[std::string(k)] = u(rng);
      sum += m[std::string(k)];
    }
    EXPECT_NEAR(make_score_card(m).overall, sum / 8.0, 1e-12);
  }
}

TEST(Score, MissingMetricAfterRepairIsSchemaError) {
  auto gw = quiet_gateway();
  auto judge = std::make_shared<mock::ScriptedBackend>(
      std::vector<std::string>{score_lines(std::vector(8, 7.0), "flow")});
  gw->register_backend(Capability::Vision, judge);
  EXPECT_THROW(referenced_score("doc", Image(4, 4), Image(4, 4), *gw), SchemaError);
  EXPECT_EQ(judge->invocations(), 2);
}

TEST(Score, RepairRecoversAMalformedFirstReply) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{
                                               "I think it is great.", score_lines(std::vector(8, 6.0))}));
  EXPECT_DOUBLE_EQ(referenced_score("doc", Image(4, 4), Image(4, 4), *gw).overall, 6.0);
}

TEST(Score, OutOfRangeIsRejected) {
  auto s = std::vector(8, 5.0);
  s[2] = 11;
  EXPECT_THROW(parse_score_reply(score_lines(s)), SchemaError);
  EXPECT_NO_THROW(parse_score_reply("aesthetic: 7/10\n" + score_lines(std::vector(8, 5.0), "aesthetic")));
}

TEST(Score, ImagesGoReferenceThenGenerated) {
  auto gw = quiet_gateway();
  Image ref(3, 3, {1, 1, 1});
  Image gen(3, 3, {2, 2, 2});
  gw->register_backend(Capability::Vision, std::make_shared<mock::FunctionBackend>([&](const BackendRequest& r) {
                         EXPECT_EQ(r.images.at(0), ref);
                         EXPECT_EQ(r.images.at(1), gen);
                         return BackendReply{score_lines(std::vector(8, 5.0)), MediaKind::Text};
                       }));
  referenced_score("doc", ref, gen, *gw);
}

TEST(Score, IdenticalImagesScoreTopWithHeuristicJudge) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::HeuristicVision>());
  const auto [plain, rich] = plain_and_rich();
  EXPECT_DOUBLE_EQ(referenced_score("doc", rich, rich, *gw).overall, 10.0);
  EXPECT_LT(referenced_score("doc", rich, plain, *gw).overall, 10.0);
}

// --- pairwise --------------------------------------------------------------

TEST(Pairwise, DerandomizationExamples) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision,
                       std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{pairwise_lines("B", "B")}));
  const Image a(4, 4), b(4, 4, kBlack);
  const auto ref_first = pairwise_compare("doc", a, b, seed_with_order(true), PairMode::Basic, *gw);
  EXPECT_EQ(ref_first.presented_order.first, Shown::Reference);
  EXPECT_EQ(ref_first.decision, Decision::Win);
  const auto gen_first = pairwise_compare("doc", a, b, seed_with_order(false), PairMode::Basic, *gw);
  EXPECT_EQ(gen_first.presented_order.first, Shown::Generated);
  EXPECT_EQ(gen_first.decision, Decision::Lose);
}

TEST(Pairwise, ExtendedBothGoodPassesThrough) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::ScriptedBackend>(
                                               std::vector<std::string>{pairwise_lines("Tie", "Both Good")}));
  const auto v = pairwise_compare("doc", Image(4, 4), Image(4, 4), 1, PairMode::Extended, *gw);
  EXPECT_EQ(v.decision, Decision::BothGood);
}

TEST(Pairwise, ModeConstraintsOnOverall) {
  EXPECT_THROW(parse_pairwise_reply(pairwise_lines("A", "Both Good"), PairMode::Basic), SchemaError);
  EXPECT_THROW(parse_pairwise_reply(pairwise_lines("A", "Tie"), PairMode::Extended), SchemaError);
  EXPECT_THROW(parse_pairwise_reply(pairwise_lines("Both Bad", "A"), PairMode::Basic), SchemaError);
  EXPECT_EQ(parse_pairwise_reply(pairwise_lines("**Image B**", "a"), PairMode::Basic).at("clarity"), Choice::B);
}

TEST(Pairwise, PromptStatesTheMode) {
  EXPECT_NE(pairwise_prompt("doc", PairMode::Extended).find("mode: extended"), std::string::npos);
  EXPECT_NE(pairwise_prompt("doc", PairMode::Basic).find("mode: basic"), std::string::npos);
  EXPECT_EQ(pair_mode_from_string("pairwise"), PairMode::Basic);
  EXPECT_THROW(pair_mode_from_string("triple"), ValidationError);
}

TEST(Pairwise, OrderIsFairOverTenThousandSeeds) {
  int first = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) first += reference_first(s) ? 1 : 0;
  const double frac = first / 10000.0;
  EXPECT_GE(frac, 0.48);
  EXPECT_LE(frac, 0.52);
}

TEST(Pairwise, SymmetricJudgeIsOrderInvariant) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::HeuristicVision>());
  const auto [plain, rich] = plain_and_rich();
  for (std::uint64_t s = 0; s < 64; ++s) {
    EXPECT_EQ(pairwise_compare("doc", plain, rich, s, PairMode::Basic, *gw).decision, Decision::Win);
    EXPECT_EQ(pairwise_compare("doc", rich, plain, s, PairMode::Basic, *gw).decision, Decision::Lose);
    EXPECT_EQ(pairwise_compare("doc", rich, rich, s, PairMode::Extended, *gw).decision, Decision::BothGood);
  }
}

TEST(Pairwise, SameSeedSameVerdict) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::HeuristicVision>());
  const auto [plain, rich] = plain_and_rich();
  const auto a = pairwise_compare("doc", plain, rich, 42, PairMode::Basic, *gw);
  const auto b = pairwise_compare("doc", plain, rich, 42, PairMode::Basic, *gw);
  EXPECT_EQ(a.presented_order, b.presented_order);
  EXPECT_EQ(a.per_criterion, b.per_criterion);
  EXPECT_EQ(a.decision, b.decision);
}

// --- win rates -------------------------------------------------------------

TEST(WinRate, PublishedExtendedRows) {
  EXPECT_EQ(win_rate_from_counts(29, 11, 0, 0, 0).win_rate, 0.725);
  EXPECT_EQ(win_rate_from_counts(18, 20, 2, 0, 0).win_rate, 0.45);
  EXPECT_EQ(win_rate_from_counts(5, 0, 0, 0, 0).win_rate, 1.0);
}

TEST(WinRate, EmptyGroupIsAnError) {
  EXPECT_THROW(win_rate_from_counts(0, 0, 0, 0, 0), EmptyGroup);
  EXPECT_THROW(aggregate_win_rates({{"m", {}}}), EmptyGroup);
  EXPECT_THROW(win_rate_from_counts(-1, 2, 0, 0, 0), ValidationError);
}

TEST(WinRate, CountsAddUpForRandomTallies) {
  std::mt19937 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<Decision> d(1 + rng() % 50);
    for (auto& x : d) x = static_cast<Decision>(rng() % 5);
    const auto row = tally(d);
    EXPECT_EQ(row.total(), static_cast<int>(d.size()));
    EXPECT_DOUBLE_EQ(row.win_rate, static_cast<double>(std::count(d.begin(), d.end(), Decision::Win)) / d.size());
  }
}

TEST(WinRate, DecisionStringsRoundTrip) {
  for (auto d : {Decision::Win, Decision::Lose, Decision::Tie, Decision::BothGood, Decision::BothBad}) {
    EXPECT_EQ(decision_from_string(to_string(d)), d);
  }
}
