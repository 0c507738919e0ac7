#include "figforge/refine.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge {

std::string_view to_string(IssueKind k) {
  switch (k) {
    case IssueKind::Overlap: return "overlap";
    case IssueKind::Alignment: return "alignment";
    case IssueKind::Flow: return "flow";
    case IssueKind::Completeness: return "completeness";
    case IssueKind::Style: return "style";
  }
  return "overlap";
}

IssueKind issue_kind_from_string(std::string_view s) {
  const std::string key = to_lower(trim(s));
  for (IssueKind k : {IssueKind::Overlap, IssueKind::Alignment, IssueKind::Flow, IssueKind::Completeness,
                      IssueKind::Style}) {
    if (to_string(k) == key) return k;
  }
  throw SchemaError("unknown issue kind '" + std::string(s) + "'");
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Threshold: return "threshold";
    case StopReason::Converged: return "converged";
    case StopReason::Budget: return "budget";
  }
  return "budget";
}

namespace {

StopReason stop_reason_from_string(std::string_view s) {
  for (StopReason r : {StopReason::Threshold, StopReason::Converged, StopReason::Budget}) {
    if (to_string(r) == s) return r;
  }
  throw ValidationError("unknown stop reason '" + std::string(s) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// critic

std::string critique_prompt(const LayoutGraph& layout, const StyleDescriptor& style, double threshold) {
  const LayoutMetrics m = measure(layout);
  std::ostringstream p;
  p << "### task: critique_layout\n"
       "You are reviewing the blueprint of a scientific illustration. The attached image is its rendering\n"
       "and the markup below is its exact source. Judge layout quality: alignment, balance, overlap\n"
       "avoidance, clarity of the flow, completeness of the content and fit to the requested style.\n"
       "Score from 0 to 10. Below "
    << format_fixed(threshold, 2)
    << " you must give concrete, actionable feedback for the designer.\n"
       "Reply format:\n"
       "score: <number 0-10>\n"
       "feedback: <what to change>\n"
       "```issues\n"
       "<overlap|alignment|flow|completeness|style> | <detail>\n"
       "```\n"
       "\n--- style ---\n"
    << style.style_text
    << "\n"
       "\n--- metrics ---\n"
       "overlap_area: "
    << format_fixed(m.overlap_area, 2) << "\nalignment_deviation: " << format_fixed(m.alignment_deviation, 2)
    << "\nbalance: " << format_fixed(m.balance, 4) << "\nnode_count: " << layout.nodes.size()
    << "\nedge_count: " << layout.edges.size() << "\n\n--- markup ---\n"
    << serialize_svg(layout, style);
  return p.str();
}

CritiqueReport parse_critique_reply(const std::string& reply, double threshold) {
  const StructuredReply r = parse_structured_reply(reply);
  const auto score_text = r.field("score");
  if (!score_text) throw SchemaError("reply has no 'score:' line");
  std::string s = trim(*score_text);
  if (auto slash = s.find('/'); slash != std::string::npos) s = trim(s.substr(0, slash));
  const auto score = parse_double(s);
  if (!score) throw SchemaError("score '" + *score_text + "' is not a number");
  if (!(*score >= 0.0 && *score <= 10.0)) throw SchemaError("score " + s + " is outside [0,10]");
  CritiqueReport report;
  report.score = *score;
  report.feedback = trim(r.field("feedback").value_or(""));
  if (report.feedback.empty() && report.score < threshold) {
    throw SchemaError("feedback is required when the score is below " + format_fixed(threshold, 2));
  }
  for (const auto& row : r.block_rows("issues")) {
    if (row.empty() || trim(row[0]).empty()) continue;
    report.per_issue.push_back({issue_kind_from_string(row[0]), row.size() > 1 ? trim(row[1]) : std::string()});
  }
  return report;
}

CritiqueReport critique(const LayoutGraph& layout, const StyleDescriptor& style, Gateway& vision_model,
                        double threshold, double raster_scale) {
  validate_layout(layout);
  const Image raster = render_layout(layout, raster_scale);
  const std::function<std::string(const std::string&)> ask = [&](const std::string& prompt) {
    return ask_vision(vision_model, prompt, {raster});
  };
  const std::function<CritiqueReport(const std::string&)> parse = [threshold](const std::string& reply) {
    return parse_critique_reply(reply, threshold);
  };
  return ask_with_repair(ask, critique_prompt(layout, style, threshold), parse);
}

// ---------------------------------------------------------------------------
// designer

std::string design_prompt(const MethodSummary& method, const StyleDescriptor& requested, const std::string& feedback) {
  const Canvas canvas;
  std::ostringstream p;
  p << "### task: design_layout\n"
       "Design the blueprint of a scientific illustration for the methodology below as SVG.\n"
       "Use only these elements: svg, g, rect, ellipse, polygon, path, text, defs, marker.\n"
       "Wrap every box in <g data-id=\"ID\" data-shape=\"rect|rounded|ellipse|diamond|group\"\n"
       "data-frame=\"x y w h\" data-fill=\"#rrggbb\"> with its label as a <text> child; draw every\n"
       "relation as <path data-source=\"ID\" data-target=\"ID\" data-edge=\"arrow|line|dashed\">.\n"
       "Canvas: "
    << canvas.width << " x " << canvas.height
    << ". Keep boxes inside the canvas, aligned, balanced and free of overlap.\n"
       "Produce a complete new layout, not a diff.\n"
       "Reply format:\n"
       "style: <one-line visual style description>\n"
       "palette: <comma-separated #rrggbb colors>\n"
       "```svg\n<svg ...>...</svg>\n```\n"
       "\n--- requested style ---\n"
    << requested.style_text << "\ncategory: " << to_string(requested.category)
    << "\n\n--- summary ---\n"
    << method.summary_text << "\n\n--- entities ---\n";
  for (const Entity& e : method.entities) p << e.id << " | " << e.label << " | " << e.kind << "\n";
  p << "\n--- relations ---\n";
  for (const Relation& r : method.relations) p << r.source_id << " | " << r.target_id << " | " << r.label << "\n";
  p << "\n--- feedback ---\n" << (trim(feedback).empty() ? std::string("(none: first draft)") : feedback) << "\n";
  return p.str();
}

Design parse_design_reply(const std::string& reply, const StyleDescriptor& requested) {
  const StructuredReply r = parse_structured_reply(reply);
  std::string markup = r.has_block("svg") ? r.blocks.at("svg") : extract_fenced(reply, "svg");
  const auto open = markup.find("<svg");
  const auto close = markup.rfind("</svg>");
  if (open == std::string::npos) throw SchemaError("reply contains no <svg> markup");
  markup = markup.substr(open, close == std::string::npos ? std::string::npos : close + 6 - open);

  ParsedSvg parsed;
  try {
    parsed = parse_svg_document(markup);
  } catch (const MalformedMarkup& e) {
    throw SchemaError(std::string("layout markup rejected: ") + e.what());
  }
  Design d;
  d.layout = std::move(parsed.graph);
  d.style = requested;
  if (parsed.style && !trim(parsed.style->style_text).empty()) {
    d.style.style_text = parsed.style->style_text;
    d.style.palette_hint = parsed.style->palette_hint;
  }
  if (auto style = r.field("style"); style && !trim(*style).empty()) d.style.style_text = trim(*style);
  if (auto palette = r.field("palette")) {
    std::vector<std::string> colors;
    for (const auto& c : split(*palette, ',')) {
      const std::string t = trim(c);
      if (t.empty()) continue;
      try {
        colors.push_back(parse_hex_color(t).hex());
      } catch (const Error&) {
        throw SchemaError("palette entry '" + t + "' is not a color");
      }
    }
    d.style.palette_hint = std::move(colors);
  }
  d.style.category = requested.category;
  return d;
}

Design regenerate(const MethodSummary& method, const std::string& feedback, Gateway& text_model,
                  const StyleDescriptor& requested) {
  const std::function<std::string(const std::string&)> ask = [&](const std::string& prompt) {
    return complete_text(text_model, prompt);
  };
  const std::function<Design(const std::string&)> parse = [&](const std::string& reply) {
    return parse_design_reply(reply, requested);
  };
  RepairOutcome outcome;
  Design d = ask_with_repair(ask, design_prompt(method, requested, feedback), parse, &outcome);
  d.attempts = outcome.attempts;
  return d;
}

Design design_initial(const MethodSummary& method, Gateway& text_model, const StyleDescriptor& requested) {
  return regenerate(method, "", text_model, requested);
}

// ---------------------------------------------------------------------------
// loop

void validate(const RefineOptions& o) {
  if (o.max_iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(o.threshold >= 0.0 && o.threshold <= 10.0)) throw ValidationError("threshold must lie in [0,10]");
  if (!(o.epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  if (!(o.raster_scale > 0.0)) throw ValidationError("raster scale must be positive");
}

namespace {

nlohmann::json report_to_json(const CritiqueReport& r) {
  nlohmann::json issues = nlohmann::json::array();
  for (const Issue& i : r.per_issue) issues.push_back({{"kind", to_string(i.kind)}, {"detail", i.detail}});
  return {{"score", r.score}, {"feedback", r.feedback}, {"issues", issues}};
}

CritiqueReport report_from_json(const nlohmann::json& j) {
  CritiqueReport r;
  r.score = j.at("score").get<double>();
  r.feedback = j.at("feedback").get<std::string>();
  for (const auto& i : j.at("issues")) {
    r.per_issue.push_back({issue_kind_from_string(i.at("kind").get<std::string>()), i.at("detail").get<std::string>()});
  }
  return r;
}

// Layout and style travel together as canonical markup.
Design design_from_markup(const std::string& markup) {
  ParsedSvg p = parse_svg_document(markup);
  Design d;
  d.layout = std::move(p.graph);
  if (p.style) d.style = *p.style;
  return d;
}

std::vector<std::string> persist_round(const std::filesystem::path& dir, int i, const LayoutGraph& layout,
                                       const StyleDescriptor& style, const CritiqueReport& report,
                                       std::optional<bool> accepted, double raster_scale) {
  const std::filesystem::path sub = dir / "iterations";
  std::filesystem::create_directories(sub);
  const std::string n = std::to_string(i);
  const std::string svg = "iterations/iteration_" + n + ".svg";
  const std::string png = "iterations/iteration_" + n + ".png";
  const std::string json = "iterations/critique_" + n + ".json";
  write_file_atomic(dir / svg, serialize_svg(layout, style));
  write_png((dir / png).string(), render_layout(layout, raster_scale));
  nlohmann::json j = report_to_json(report);
  j["iteration"] = i;
  if (accepted) j["accepted"] = *accepted;
  write_file_atomic(dir / json, j.dump(2) + "\n");
  return {svg, png, json};
}

}  // namespace

nlohmann::json refine_state_to_json(const RefineState& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const HistoryEntry& h : s.history) {
    history.push_back({{"iteration", h.iteration},
                       {"candidate_score", h.candidate_score},
                       {"accepted", h.accepted},
                       {"artifact_paths", h.artifact_paths},
                       {"layout_svg", serialize_svg(h.layout, h.style)},
                       {"report", report_to_json(h.report)},
                       {"design_attempts", h.design_attempts}});
  }
  nlohmann::json j = {{"best_layout_svg", serialize_svg(s.best_layout, s.best_style)},
                      {"best_score", s.best_score},
                      {"best_report", report_to_json(s.best_report)},
                      {"initial_score", s.initial_score},
                      {"iteration", s.iteration},
                      {"history", history},
                      {"initial_artifacts", s.initial_artifacts}};
  j["stop"] = s.stop ? nlohmann::json(std::string(to_string(*s.stop))) : nlohmann::json(nullptr);
  return j;
}

RefineState refine_state_from_json(const nlohmann::json& j) {
  try {
    RefineState s;
    Design best = design_from_markup(j.at("best_layout_svg").get<std::string>());
    s.best_layout = std::move(best.layout);
    s.best_style = std::move(best.style);
    s.best_score = j.at("best_score").get<double>();
    s.best_report = report_from_json(j.at("best_report"));
    s.initial_score = j.at("initial_score").get<double>();
    s.iteration = j.at("iteration").get<int>();
    s.initial_artifacts = j.at("initial_artifacts").get<std::vector<std::string>>();
    for (const auto& h : j.at("history")) {
      HistoryEntry e;
      e.iteration = h.at("iteration").get<int>();
      e.candidate_score = h.at("candidate_score").get<double>();
      e.accepted = h.at("accepted").get<bool>();
      e.artifact_paths = h.at("artifact_paths").get<std::vector<std::string>>();
      Design d = design_from_markup(h.at("layout_svg").get<std::string>());
      e.layout = std::move(d.layout);
      e.style = std::move(d.style);
      e.report = report_from_json(h.at("report"));
      e.design_attempts = h.at("design_attempts").get<int>();
      s.history.push_back(std::move(e));
    }
    if (!j.at("stop").is_null()) s.stop = stop_reason_from_string(j.at("stop").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("refine state is malformed: ") + e.what());
  }
}

RefineState run_loop(const MethodSummary& method, const Design& initial, Gateway& text_model, Gateway& vision_model,
                     const RefineOptions& options, const LoopHooks& hooks) {
  validate(options);
  RefineState state;
  auto progress = [&] {
    if (hooks.on_progress) hooks.on_progress(state);
  };
  // Runs a step; stage errors leave with the state reached so far attached.
  auto guarded = [&](auto&& step) -> decltype(auto) {
    try {
      return step();
    } catch (const RefineInterrupted&) {
      throw;
    } catch (const Error& e) {
      throw RefineInterrupted(e, state, std::current_exception());
    }
  };

  if (hooks.resume) {
    state = *hooks.resume;
  } else {
    validate_layout(initial.layout);
    const CritiqueReport r0 = guarded([&] {
      return critique(initial.layout, initial.style, vision_model, options.threshold, options.raster_scale);
    });
    state.best_layout = initial.layout;
    state.best_style = initial.style;
    state.best_score = r0.score;
    state.best_report = r0;
    state.initial_score = r0.score;
    state.iteration = 0;
    if (hooks.artifact_dir) {
      state.initial_artifacts =
          persist_round(*hooks.artifact_dir, 0, initial.layout, initial.style, r0, std::nullopt, options.raster_scale);
    }
    if (state.best_score >= options.threshold) state.stop = StopReason::Threshold;
    spdlog::debug("refine: initial score {:.2f}", r0.score);
    progress();
  }

  while (!state.stop && state.iteration < options.max_iterations) {
    const int i = state.iteration + 1;
    // The stored report of the incumbent is its critique; with a
    // deterministic critic re-asking would return the same feedback.
    const Design cand = guarded([&] {
      return regenerate(method, state.best_report.feedback, text_model, state.best_style);
    });
    const CritiqueReport r = guarded([&] {
      return critique(cand.layout, cand.style, vision_model, options.threshold, options.raster_scale);
    });
    HistoryEntry entry;
    entry.iteration = i;
    entry.candidate_score = r.score;
    entry.accepted = r.score > state.best_score;
    entry.layout = cand.layout;
    entry.style = cand.style;
    entry.report = r;
    entry.design_attempts = cand.attempts;
    if (hooks.artifact_dir) {
      entry.artifact_paths =
          persist_round(*hooks.artifact_dir, i, cand.layout, cand.style, r, entry.accepted, options.raster_scale);
    }
    const double previous_best = state.best_score;
    if (entry.accepted) {
      state.best_layout = cand.layout;
      state.best_style = cand.style;
      state.best_score = r.score;
      state.best_report = r;
    }
    state.history.push_back(std::move(entry));
    state.iteration = i;
    spdlog::debug("refine: round {} candidate {:.2f} best {:.2f}", i, r.score, state.best_score);
    if (state.best_score >= options.threshold) {
      state.stop = StopReason::Threshold;
    } else if (!state.history.back().accepted && std::abs(r.score - previous_best) < options.epsilon) {
      state.stop = StopReason::Converged;
    }
    progress();
  }
  if (!state.stop) {
    state.stop = StopReason::Budget;
    progress();
  }
  return state;
}

}  // namespace figforge
