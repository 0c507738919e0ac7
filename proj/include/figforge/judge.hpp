#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "figforge/gateway.hpp"
#include "figforge/image.hpp"

namespace figforge {

// --- referenced scoring ----------------------------------------------------

inline constexpr std::array<std::string_view, 8> kScoreKeys = {
    "aesthetic", "expressiveness", "polish", "clarity", "flow", "accuracy", "completeness", "appropriateness"};

struct ScoreCard {
  std::map<std::string, double> sub_scores;
  std::map<std::string, std::string> reasoning;
  double overall = 0;
};

// Checks that all eight keys are present and in [0,10] and sets overall to
// their mean. Throws SchemaError.
ScoreCard make_score_card(std::map<std::string, double> sub_scores, std::map<std::string, std::string> reasoning = {});

std::string referenced_score_prompt(const std::string& full_text);
// One `key: score | reasoning` line per sub-metric.
ScoreCard parse_score_reply(const std::string& reply);
// Images go to the model as (reference, generated).
ScoreCard referenced_score(const std::string& full_text, const Image& reference, const Image& generated,
                           Gateway& vision_model);

// --- pairwise comparison ---------------------------------------------------

inline constexpr std::array<std::string_view, 7> kPairwiseCriteria = {
    "aesthetic", "clarity", "sophistication", "accuracy", "completeness", "appropriateness", "overall"};

enum class PairMode { Basic, Extended };
enum class Shown { Generated, Reference };
enum class Choice { A, B, Tie, BothGood, BothBad };
enum class Decision { Win, Lose, Tie, BothGood, BothBad };

std::string_view to_string(PairMode m);
PairMode pair_mode_from_string(std::string_view s);
std::string_view to_string(Shown s);
std::string_view to_string(Choice c);
std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

// Presentation order is a pure function of the seed.
bool reference_first(std::uint64_t seed);

// Win always means the generated image was preferred.
Decision derandomize(Choice overall, bool reference_shown_first);

struct PairwiseVerdict {
  std::uint64_t order_seed = 0;
  std::pair<Shown, Shown> presented_order{Shown::Generated, Shown::Reference};
  std::map<std::string, Choice> per_criterion;
  Decision decision = Decision::Tie;
  PairMode mode = PairMode::Basic;
};

std::string pairwise_prompt(const std::string& full_text, PairMode mode);
// Lenient `CRITERION: A|B|Tie` lines; extended overall takes A|B|Both Good|Both Bad.
std::map<std::string, Choice> parse_pairwise_reply(const std::string& reply, PairMode mode);
PairwiseVerdict pairwise_compare(const std::string& full_text, const Image& reference, const Image& generated,
                                 std::uint64_t seed, PairMode mode, Gateway& vision_model);

// --- win rates -------------------------------------------------------------

struct WinRateRow {
  int win = 0;
  int lose = 0;
  int good = 0;
  int bad = 0;
  int tie = 0;
  double win_rate = 0;

  int total() const { return win + lose + good + bad + tie; }
};

// win / total; EmptyGroup when there are no verdicts.
WinRateRow win_rate_from_counts(int win, int lose, int good, int bad, int tie);
WinRateRow tally(const std::vector<Decision>& decisions);

using WinRateTable = std::map<std::string, WinRateRow>;
WinRateTable aggregate_win_rates(const std::map<std::string, std::vector<PairwiseVerdict>>& by_method);

}  // namespace figforge
