#include "figforge/judge.hpp"

#include <random>

#include "figforge/error.hpp"
#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge {

ScoreCard make_score_card(std::map<std::string, double> sub_scores, std::map<std::string, std::string> reasoning) {
  ScoreCard card;
  double sum = 0;
  for (std::string_view key : kScoreKeys) {
    auto it = sub_scores.find(std::string(key));
    if (it == sub_scores.end()) throw SchemaError("score for '" + std::string(key) + "' is missing");
    if (!(it->second >= 0.0 && it->second <= 10.0)) {
      throw SchemaError("score for '" + std::string(key) + "' is outside [0,10]");
    }
    card.sub_scores[it->first] = it->second;
    card.reasoning[it->first] = reasoning.count(it->first) ? reasoning[it->first] : std::string();
    sum += it->second;
  }
  card.overall = sum / static_cast<double>(kScoreKeys.size());
  return card;
}

std::string referenced_score_prompt(const std::string& full_text) {
  std::string p =
      "### task: referenced_score\n"
      "You are an expert reviewer of scientific illustrations. Image 1 is the original figure from the\n"
      "source document; image 2 is a generated figure for the same text. Using the full text and the\n"
      "original as reference, rate the generated figure from 0 to 10 on each metric:\n"
      "- aesthetic: overall visual appeal and design quality\n"
      "- expressiveness: how vividly it conveys the ideas\n"
      "- polish: professional finish, consistent typography and spacing\n"
      "- clarity: readability and lack of clutter\n"
      "- flow: logical reading order and visual hierarchy\n"
      "- accuracy: faithfulness to the described method\n"
      "- completeness: coverage of the essential components\n"
      "- appropriateness: fit to the document's genre and audience\n"
      "Reply format, one line per metric:\n"
      "<metric>: <score> | <one-sentence reasoning>\n"
      "\n--- document ---\n";
  return p + full_text + "\n";
}

ScoreCard parse_score_reply(const std::string& reply) {
  const StructuredReply r = parse_structured_reply(reply);
  std::map<std::string, double> scores;
  std::map<std::string, std::string> reasons;
  for (std::string_view key : kScoreKeys) {
    const auto value = r.field(key);
    if (!value) throw SchemaError("reply has no '" + std::string(key) + ":' line");
    const auto bar = value->find('|');
    std::string number = trim(value->substr(0, bar));
    if (auto slash = number.find('/'); slash != std::string::npos) number = trim(number.substr(0, slash));
    const auto score = parse_double(number);
    if (!score) throw SchemaError("score for '" + std::string(key) + "' is not a number");
    scores[std::string(key)] = *score;
    reasons[std::string(key)] = bar == std::string::npos ? std::string() : trim(value->substr(bar + 1));
  }
  return make_score_card(std::move(scores), std::move(reasons));
}

ScoreCard referenced_score(const std::string& full_text, const Image& reference, const Image& generated,
                           Gateway& vision_model) {
  if (trim(full_text).empty()) throw PreconditionError("full text is empty");
  if (reference.empty() || generated.empty()) throw PreconditionError("both images are required");
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return ask_vision(vision_model, p, {reference, generated});
  };
  const std::function<ScoreCard(const std::string&)> parse = parse_score_reply;
  return ask_with_repair(ask, referenced_score_prompt(full_text), parse);
}

// ---------------------------------------------------------------------------

std::string_view to_string(PairMode m) { return m == PairMode::Basic ? "basic" : "extended"; }

PairMode pair_mode_from_string(std::string_view s) {
  const std::string k = to_lower(trim(s));
  if (k == "basic" || k == "pairwise") return PairMode::Basic;
  if (k == "extended") return PairMode::Extended;
  throw ValidationError("unknown pairwise mode '" + std::string(s) + "'");
}

std::string_view to_string(Shown s) { return s == Shown::Generated ? "generated" : "reference"; }

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::Tie: return "Tie";
    case Choice::BothGood: return "Both Good";
    case Choice::BothBad: return "Both Bad";
  }
  return "Tie";
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Win: return "Win";
    case Decision::Lose: return "Lose";
    case Decision::Tie: return "Tie";
    case Decision::BothGood: return "BothGood";
    case Decision::BothBad: return "BothBad";
  }
  return "Tie";
}

Decision decision_from_string(std::string_view s) {
  for (Decision d : {Decision::Win, Decision::Lose, Decision::Tie, Decision::BothGood, Decision::BothBad}) {
    if (to_string(d) == s) return d;
  }
  throw ValidationError("unknown decision '" + std::string(s) + "'");
}

bool reference_first(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return (rng() & 1u) != 0;
}

Decision derandomize(Choice overall, bool reference_shown_first) {
  switch (overall) {
    case Choice::A: return reference_shown_first ? Decision::Lose : Decision::Win;
    case Choice::B: return reference_shown_first ? Decision::Win : Decision::Lose;
    case Choice::Tie: return Decision::Tie;
    case Choice::BothGood: return Decision::BothGood;
    case Choice::BothBad: return Decision::BothBad;
  }
  return Decision::Tie;
}

std::string pairwise_prompt(const std::string& full_text, PairMode mode) {
  std::string p =
      "### task: pairwise_compare\n"
      "mode: " +
      std::string(to_string(mode)) +
      "\n"
      "Two figures, A (first image) and B (second image), were made for the document below. You do not\n"
      "know how either was produced. Compare them on each criterion:\n"
      "- aesthetic: visual appeal and design quality\n"
      "- clarity: readability and lack of clutter\n"
      "- sophistication: depth and richness of the information shown\n"
      "- accuracy: faithfulness to the document\n"
      "- completeness: coverage of the essential components\n"
      "- appropriateness: fit to the document's genre and audience\n"
      "- overall: your final choice\n"
      "Reply format, one line per criterion:\n"
      "<criterion>: A | B | Tie\n";
  if (mode == PairMode::Extended) {
    p += "For overall, answer A, B, Both Good or Both Bad (no Tie).\n";
  }
  return p + "\n--- document ---\n" + full_text + "\n";
}

namespace {

Choice parse_choice(const std::string& raw) {
  std::string s;
  for (char c : to_lower(trim(raw))) {
    if (std::isalnum(static_cast<unsigned char>(c))) s.push_back(c);
  }
  if (s.starts_with("image")) s = s.substr(5);
  if (s == "a" || s == "figurea") return Choice::A;
  if (s == "b" || s == "figureb") return Choice::B;
  if (s == "tie" || s == "equal") return Choice::Tie;
  if (s == "bothgood") return Choice::BothGood;
  if (s == "bothbad") return Choice::BothBad;
  throw SchemaError("'" + trim(raw) + "' is not a valid choice");
}

}  // namespace

std::map<std::string, Choice> parse_pairwise_reply(const std::string& reply, PairMode mode) {
  const StructuredReply r = parse_structured_reply(reply);
  std::map<std::string, Choice> out;
  for (std::string_view key : kPairwiseCriteria) {
    const auto value = r.field(key);
    if (!value) throw SchemaError("reply has no '" + std::string(key) + ":' line");
    const std::string first = trim(value->substr(0, value->find('|')));
    const Choice c = parse_choice(first);
    const bool absolute = c == Choice::BothGood || c == Choice::BothBad;
    if (key != "overall" && absolute) throw SchemaError("'" + std::string(key) + "' must be A, B or Tie");
    if (key == "overall") {
      if (mode == PairMode::Basic && absolute) throw SchemaError("overall must be A, B or Tie");
      if (mode == PairMode::Extended && c == Choice::Tie) throw SchemaError("overall must be A, B, Both Good or Both Bad");
    }
    out[std::string(key)] = c;
  }
  return out;
}

PairwiseVerdict pairwise_compare(const std::string& full_text, const Image& reference, const Image& generated,
                                 std::uint64_t seed, PairMode mode, Gateway& vision_model) {
  if (trim(full_text).empty()) throw PreconditionError("full text is empty");
  if (reference.empty() || generated.empty()) throw PreconditionError("both images are required");
  PairwiseVerdict v;
  v.order_seed = seed;
  v.mode = mode;
  const bool ref_first = reference_first(seed);
  v.presented_order = ref_first ? std::pair{Shown::Reference, Shown::Generated} : std::pair{Shown::Generated, Shown::Reference};
  std::vector<Image> images = ref_first ? std::vector<Image>{reference, generated} : std::vector<Image>{generated, reference};
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return ask_vision(vision_model, p, images);
  };
  const std::function<std::map<std::string, Choice>(const std::string&)> parse = [mode](const std::string& reply) {
    return parse_pairwise_reply(reply, mode);
  };
  v.per_criterion = ask_with_repair(ask, pairwise_prompt(full_text, mode), parse);
  v.decision = derandomize(v.per_criterion.at("overall"), ref_first);
  return v;
}

// ---------------------------------------------------------------------------

WinRateRow win_rate_from_counts(int win, int lose, int good, int bad, int tie) {
  if (win < 0 || lose < 0 || good < 0 || bad < 0 || tie < 0) throw ValidationError("counts must be nonnegative");
  WinRateRow row{win, lose, good, bad, tie, 0.0};
  if (row.total() == 0) throw EmptyGroup("no verdicts to aggregate");
  row.win_rate = static_cast<double>(win) / static_cast<double>(row.total());
  return row;
}

WinRateRow tally(const std::vector<Decision>& decisions) {
  int c[5] = {0, 0, 0, 0, 0};
  for (Decision d : decisions) ++c[static_cast<int>(d)];
  return win_rate_from_counts(c[static_cast<int>(Decision::Win)], c[static_cast<int>(Decision::Lose)],
                              c[static_cast<int>(Decision::BothGood)], c[static_cast<int>(Decision::BothBad)],
                              c[static_cast<int>(Decision::Tie)]);
}

WinRateTable aggregate_win_rates(const std::map<std::string, std::vector<PairwiseVerdict>>& by_method) {
  if (by_method.empty()) throw EmptyGroup("no methods to aggregate");
  WinRateTable table;
  for (const auto& [method, verdicts] : by_method) {
    if (verdicts.empty()) throw EmptyGroup("method '" + method + "' has no verdicts");
    std::vector<Decision> decisions;
    for (const auto& v : verdicts) decisions.push_back(v.decision);
    table[method] = tally(decisions);
  }
  return table;
}

}  // namespace figforge
