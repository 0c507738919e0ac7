#include "figforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "figforge/error.hpp"
#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge {

std::string measure_figure_prompt() {
  return "### task: measure_figure\n"
         "Analyse the attached scientific figure and report:\n"
         "- text_density: percentage (0-100) of the figure area covered by text\n"
         "- components: number of visually separate components (panels, boxes, icons)\n"
         "- colors: number of distinct colours used deliberately (ignore anti-aliasing)\n"
         "- shapes: number of distinct shape types (rectangles, circles, arrows, ...)\n"
         "Reply format:\n"
         "text_density: <number>\n"
         "components: <integer>\n"
         "colors: <integer>\n"
         "shapes: <integer>\n";
}

MeasuredFigure parse_figure_stats_reply(const std::string& reply) {
  const StructuredReply r = parse_structured_reply(reply);
  MeasuredFigure out;
  auto number = [&](std::string_view key) {
    const auto v = r.field(key);
    if (!v) throw SchemaError("reply has no '" + std::string(key) + ":' line");
    std::string s = trim(*v);
    if (s.ends_with("%")) s = trim(s.substr(0, s.size() - 1));
    const auto d = parse_double(s);
    if (!d || !std::isfinite(*d)) throw SchemaError(std::string(key) + " '" + *v + "' is not a number");
    return *d;
  };
  double density = number("text_density");
  if (density < 0 || density > 100) {
    const double clamped = std::clamp(density, 0.0, 100.0);
    out.warnings.push_back("text_density " + format_fixed(density, 2) + " clamped to " + format_fixed(clamped, 2));
    density = clamped;
  }
  out.stats.text_density = density;
  auto count = [&](std::string_view key) {
    double v = number(key);
    if (v < 0) {
      out.warnings.push_back(std::string(key) + " " + format_fixed(v, 2) + " clamped to 0");
      v = 0;
    }
    const double rounded = std::round(v);
    if (rounded != v) {
      out.warnings.push_back(std::string(key) + " " + format_fixed(v, 2) + " rounded to " + format_fixed(rounded, 0));
    }
    return static_cast<int>(rounded);
  };
  out.stats.components = count("components");
  out.stats.colors = count("colors");
  out.stats.shapes = count("shapes");
  return out;
}

MeasuredFigure measure_figure(const Image& image, Gateway& vision_model) {
  if (image.empty()) throw PreconditionError("figure image is empty");
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return ask_vision(vision_model, p, {image});
  };
  const std::function<MeasuredFigure(const std::string&)> parse = parse_figure_stats_reply;
  return ask_with_repair(ask, measure_figure_prompt(), parse);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

StatsAverages aggregate_stats(const std::vector<FigureStats>& stats) {
  if (stats.empty()) throw EmptyInput("no figure statistics to aggregate");
  StatsAverages a;
  for (const FigureStats& s : stats) {
    a.text_density += s.text_density;
    a.components += s.components;
    a.colors += s.colors;
    a.shapes += s.shapes;
  }
  const double n = static_cast<double>(stats.size());
  return {round2(a.text_density / n), round2(a.components / n), round2(a.colors / n), round2(a.shapes / n)};
}

// ---------------------------------------------------------------------------

namespace {

// Kappa from marginal counts, kept in integers until the final division so
// the p_e = 1 case is detected exactly.
double kappa_from_counts(long n, long agree, const std::vector<long>& row, const std::vector<long>& col) {
  if (n <= 0) throw EmptyInput("no rating pairs");
  long double expected = 0;  // n^2 * p_e
  for (std::size_t k = 0; k < row.size(); ++k) expected += static_cast<long double>(row[k]) * col[k];
  const long double nn = static_cast<long double>(n) * n;
  const long double observed = static_cast<long double>(n) * agree;  // n^2 * p_o
  if (expected == nn) {
    if (observed == nn) return 1.0;
    throw Degenerate("chance agreement is 1 but observed agreement is not");
  }
  return static_cast<double>((observed - expected) / (nn - expected));
}

}  // namespace

double cohens_kappa(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw EmptyInput("no rating pairs");
  std::map<std::string, std::size_t> index;
  for (const auto& p : pairs) {
    index.emplace(p.rater_a, 0);
    index.emplace(p.rater_b, 0);
  }
  std::size_t k = 0;
  for (auto& [label, i] : index) i = k++;
  std::vector<long> row(index.size(), 0);
  std::vector<long> col(index.size(), 0);
  long agree = 0;
  for (const auto& p : pairs) {
    ++row[index[p.rater_a]];
    ++col[index[p.rater_b]];
    if (p.rater_a == p.rater_b) ++agree;
  }
  return kappa_from_counts(static_cast<long>(pairs.size()), agree, row, col);
}

double cohens_kappa(const std::vector<std::vector<long>>& table) {
  const std::size_t k = table.size();
  std::vector<long> row(k, 0);
  std::vector<long> col(k, 0);
  long n = 0;
  long agree = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (table[i].size() != k) throw ValidationError("confusion table must be square");
    for (std::size_t j = 0; j < k; ++j) {
      if (table[i][j] < 0) throw ValidationError("confusion table counts must be nonnegative");
      row[i] += table[i][j];
      col[j] += table[i][j];
      n += table[i][j];
      if (i == j) agree += table[i][j];
    }
  }
  return kappa_from_counts(n, agree, row, col);
}

// ---------------------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_lengths(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("series have different lengths (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw LengthMismatch("at least two paired values are required");
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ZeroVariance("a series is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++tied_x;
      if (dy == 0) ++tied_y;
      if (dx == 0 || dy == 0) continue;
      if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const long n0 = static_cast<long>(n * (n - 1) / 2);
  if (tied_x == n0 || tied_y == n0) throw ZeroVariance("a series is constant");
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(n0 - tied_x) * static_cast<double>(n0 - tied_y));
}

double mean_ranking_error(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<std::string>* groups) {
  check_lengths(x, y);
  if (groups != nullptr && groups->size() != x.size()) throw LengthMismatch("group labels do not match the series");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < x.size(); ++i) members[groups ? (*groups)[i] : std::string()].push_back(i);
  double total = 0;
  for (const auto& [g, idx] : members) {
    std::vector<double> gx, gy;
    for (std::size_t i : idx) {
      gx.push_back(x[i]);
      gy.push_back(y[i]);
    }
    const auto rx = average_ranks(gx);
    const auto ry = average_ranks(gy);
    for (std::size_t k = 0; k < idx.size(); ++k) total += std::abs(rx[k] - ry[k]);
  }
  return total / static_cast<double>(x.size());
}

Correlations correlations(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<std::string>* groups) {
  Correlations c;
  c.pearson = pearson(x, y);
  c.spearman = spearman(x, y);
  c.kendall_tau = kendall_tau_b(x, y);
  c.mean_ranking_error = mean_ranking_error(x, y, groups);
  return c;
}

}  // namespace figforge
