#pragma once

#include <optional>
#include <string>
#include <vector>

#include "figforge/gateway.hpp"
#include "figforge/image.hpp"

namespace figforge {

struct FigureStats {
  double text_density = 0;  // percent, [0,100]
  int components = 0;
  int colors = 0;
  int shapes = 0;

  friend bool operator==(const FigureStats&, const FigureStats&) = default;
};

struct MeasuredFigure {
  FigureStats stats;
  std::vector<std::string> warnings;  // clamping and rounding applied
};

std::string measure_figure_prompt();
// `text_density`, `components`, `colors`, `shapes` lines. Out-of-range values
// are clamped and fractional counts rounded, each with a warning. Missing or
// non-numeric fields are a SchemaError.
MeasuredFigure parse_figure_stats_reply(const std::string& reply);
MeasuredFigure measure_figure(const Image& image, Gateway& vision_model);

// Field means rounded to two decimals. EmptyInput on an empty list.
struct StatsAverages {
  double text_density = 0;
  double components = 0;
  double colors = 0;
  double shapes = 0;
};
StatsAverages aggregate_stats(const std::vector<FigureStats>& stats);

double round2(double v);

// --- agreement -------------------------------------------------------------

struct LabelPair {
  std::string item_id;
  std::string rater_a;
  std::string rater_b;
};

// (p_o - p_e) / (1 - p_e). When p_e = 1 the result is 1 if p_o = 1, otherwise
// Degenerate. EmptyInput when there are no pairs.
double cohens_kappa(const std::vector<LabelPair>& pairs);
// Same, from a square confusion table (rows: rater a, columns: rater b).
double cohens_kappa(const std::vector<std::vector<long>>& table);

// --- correlation -----------------------------------------------------------

// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(const std::vector<double>& v);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);
// Mean |rank(x) - rank(y)|; with `groups`, ranks are taken within each group.
double mean_ranking_error(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<std::string>* groups = nullptr);

struct Correlations {
  double pearson = 0;
  double spearman = 0;
  double kendall_tau = 0;
  double mean_ranking_error = 0;
};

// LengthMismatch for unequal lengths or fewer than two items; ZeroVariance
// when either side is constant.
Correlations correlations(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<std::string>* groups = nullptr);

}  // namespace figforge
