#include "figforge/config.hpp"

#include <cmath>
#include <set>

#include "toml.hpp"

#include "figforge/error.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/mock_models.hpp"
#include "figforge/remote_backends.hpp"
#include "figforge/util.hpp"

namespace figforge {

namespace fs = std::filesystem;

const BackendConfig& Config::backend(Capability c) const {
  static const BackendConfig kMock;
  const auto it = backends.find(c);
  return it == backends.end() ? kMock : it->second;
}

namespace {

// Typed reads that reject unknown keys and mistyped values instead of
// silently ignoring them.
class TableReader {
 public:
  TableReader(const toml::table& table, std::string where) : table_(table), where_(std::move(where)) {}

  template <typename T>
  void read(std::string_view key, T& out) {
    seen_.insert(std::string(key));
    const toml::node* node = table_.get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value_exact<bool>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node->value_exact<std::int64_t>()) {
        out = static_cast<T>(*v);
        if (static_cast<std::int64_t>(out) == *v) return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node->value<double>()) {
        out = *v;
        return;
      }
    } else {
      if (auto v = node->value_exact<std::string>()) {
        out = *v;
        return;
      }
    }
    throw ValidationError("config: " + where_ + "." + std::string(key) + " has the wrong type");
  }

  void read_path(std::string_view key, std::optional<fs::path>& out) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = fs::path(s);
  }

  void reject_unknown(std::initializer_list<std::string_view> subtables = {}) const {
    for (const auto& [k, v] : table_) {
      const std::string key(k.str());
      const bool sub = std::find(subtables.begin(), subtables.end(), key) != subtables.end();
      if (!seen_.contains(key) && !sub) throw ValidationError("config: unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const toml::table& table_;
  std::string where_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return nullptr;
  if (!n->is_table()) throw ValidationError("config: [" + std::string(key) + "] must be a table");
  return n->as_table();
}

}  // namespace

Config parse_config(std::string_view toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ValidationError(std::string("config is not valid TOML: ") + std::string(e.description()));
  }
  Config c;
  TableReader top(root, "");
  top.read("seed", c.seed);
  top.reject_unknown({"pipeline", "judge", "gateway", "backends"});

  if (const auto* t = subtable(root, "pipeline")) {
    TableReader r(*t, "pipeline");
    r.read("iterations", c.pipeline.iterations);
    r.read("threshold", c.pipeline.threshold);
    r.read("epsilon", c.pipeline.epsilon);
    r.read("style", c.pipeline.style);
    r.read("skip_text_refinement", c.pipeline.skip_text_refinement);
    r.read("raster_scale", c.pipeline.raster_scale);
    r.read("match_max_distance", c.pipeline.match.max_distance);
    r.read("keep_floor", c.pipeline.match.keep_floor);
    r.read("workers", c.pipeline.workers);
    r.reject_unknown();
  }
  if (const auto* t = subtable(root, "judge")) {
    TableReader r(*t, "judge");
    r.read("mode", c.judge.mode);
    r.reject_unknown();
  }
  if (const auto* t = subtable(root, "gateway")) {
    TableReader r(*t, "gateway");
    r.read_path("cache_dir", c.gateway.cache_dir);
    r.read("max_attempts", c.gateway.max_attempts);
    r.read("base_delay_ms", c.gateway.base_delay_ms);
    r.reject_unknown();
  }
  if (const auto* t = subtable(root, "backends")) {
    for (const auto& [k, v] : *t) {
      const std::string slot(k.str());
      Capability cap;
      try {
        cap = capability_from_string(slot);
      } catch (const Error&) {
        throw ValidationError("config: unknown backend slot [backends." + slot + "]");
      }
      if (!v.is_table()) throw ValidationError("config: [backends." + slot + "] must be a table");
      TableReader r(*v.as_table(), "backends." + slot);
      BackendConfig b;
      r.read("kind", b.kind);
      r.read("endpoint", b.endpoint);
      r.read("model", b.model);
      r.read("auth_env", b.auth_env);
      r.read("command", b.command);
      r.read("timeout_seconds", b.timeout_seconds);
      r.read("rate_limit_per_minute", b.rate_limit_per_minute);
      r.read("ocr_drop_first_char_every", b.ocr_drop_first_char_every);
      r.reject_unknown();
      c.backends[cap] = b;
    }
  }
  return c;
}

Config load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw FileNotFound("config file not found: " + path.string());
  return parse_config(read_file(path));
}

void validate(const Config& c) {
  validate(refine_options(c));
  if (!(c.pipeline.raster_scale > 0.0)) throw ValidationError("pipeline.raster_scale must be positive");
  if (!(c.pipeline.match.max_distance >= 0.0 && c.pipeline.match.max_distance <= 1.0)) {
    throw ValidationError("pipeline.match_max_distance must lie in [0,1]");
  }
  if (!(c.pipeline.match.keep_floor >= 0.0 && c.pipeline.match.keep_floor <= 1.0)) {
    throw ValidationError("pipeline.keep_floor must lie in [0,1]");
  }
  if (c.pipeline.workers < 1) throw ValidationError("pipeline.workers must be >= 1");
  if (c.judge.mode != "score" && c.judge.mode != "pairwise" && c.judge.mode != "extended") {
    throw ValidationError("judge.mode must be score, pairwise or extended");
  }
  if (c.gateway.max_attempts < 1) throw ValidationError("gateway.max_attempts must be >= 1");
  if (c.gateway.base_delay_ms < 0) throw ValidationError("gateway.base_delay_ms must be >= 0");
  for (const auto& [cap, b] : c.backends) {
    const std::string where = "backends." + std::string(to_string(cap));
    if (b.kind == "http") {
      if (b.endpoint.empty() || b.model.empty()) throw ValidationError(where + ": http needs endpoint and model");
      if (!b.endpoint.starts_with("http://") && !b.endpoint.starts_with("https://")) {
        throw ValidationError(where + ": endpoint must start with http:// or https://");
      }
    } else if (b.kind == "subprocess") {
      if (b.command.empty()) throw ValidationError(where + ": subprocess needs command");
    } else if (b.kind != "mock") {
      throw ValidationError(where + ": kind must be mock, http or subprocess");
    }
    if (b.timeout_seconds < 1) throw ValidationError(where + ": timeout_seconds must be >= 1");
    if (b.rate_limit_per_minute < 0) throw ValidationError(where + ": rate_limit_per_minute must be >= 0");
    if (b.ocr_drop_first_char_every < 0) throw ValidationError(where + ": ocr_drop_first_char_every must be >= 0");
  }
}

RefineOptions refine_options(const Config& c) {
  RefineOptions o;
  o.max_iterations = c.pipeline.iterations;
  o.threshold = c.pipeline.threshold;
  o.epsilon = c.pipeline.epsilon;
  o.raster_scale = c.pipeline.raster_scale;
  return o;
}

Stage2Options stage2_options(const Config& c) {
  Stage2Options o;
  o.skip_text_refinement = c.pipeline.skip_text_refinement;
  o.raster_scale = c.pipeline.raster_scale;
  o.match = c.pipeline.match;
  return o;
}

StyleDescriptor requested_style(const Config& c) {
  StyleDescriptor s;
  if (!trim(c.pipeline.style).empty()) s.style_text = trim(c.pipeline.style);
  return s;
}

nlohmann::ordered_json config_snapshot(const Config& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["pipeline"] = {{"iterations", c.pipeline.iterations},
                   {"threshold", c.pipeline.threshold},
                   {"epsilon", c.pipeline.epsilon},
                   {"style", requested_style(c).style_text},
                   {"skip_text_refinement", c.pipeline.skip_text_refinement},
                   {"raster_scale", c.pipeline.raster_scale},
                   {"match_max_distance", c.pipeline.match.max_distance},
                   {"keep_floor", c.pipeline.match.keep_floor}};
  j["judge"] = {{"mode", c.judge.mode}};
  j["gateway"] = {{"max_attempts", c.gateway.max_attempts}, {"base_delay_ms", c.gateway.base_delay_ms}};
  nlohmann::ordered_json backends;
  for (Capability cap : kAllCapabilities) {
    const BackendConfig& b = c.backend(cap);
    nlohmann::ordered_json e{{"kind", b.kind}};
    if (b.kind == "http") {
      e["endpoint"] = b.endpoint;
      e["model"] = b.model;
      e["auth_env"] = b.auth_env;
      e["timeout_seconds"] = b.timeout_seconds;
    } else if (b.kind == "subprocess") {
      e["command"] = b.command;
      e["model"] = b.model;
    } else if (cap == Capability::Ocr) {
      e["ocr_drop_first_char_every"] = b.ocr_drop_first_char_every;
    }
    e["rate_limit_per_minute"] = b.rate_limit_per_minute;
    backends[std::string(to_string(cap))] = std::move(e);
  }
  j["backends"] = std::move(backends);
  return j;
}

namespace {

std::shared_ptr<Backend> mock_backend(Capability cap, const BackendConfig& b) {
  switch (cap) {
    case Capability::Text: return std::make_shared<mock::HeuristicText>();
    case Capability::Vision: return std::make_shared<mock::HeuristicVision>();
    case Capability::TextToImage: return std::make_shared<mock::IdentityTextToImage>();
    case Capability::Ocr: return std::make_shared<mock::GlyphOcr>(b.ocr_drop_first_char_every);
    case Capability::Erase: return std::make_shared<mock::RingFillEraser>();
  }
  throw ValidationError("unknown capability");
}

}  // namespace

std::unique_ptr<Gateway> build_gateway(const Config& c, std::optional<fs::path> cache_dir, SleepFn sleep) {
  GatewayOptions o;
  o.cache_dir = std::move(cache_dir);
  o.retry.max_attempts = c.gateway.max_attempts;
  o.retry.base_delay = std::chrono::milliseconds{c.gateway.base_delay_ms};
  o.sleep = std::move(sleep);
  auto gw = std::make_unique<Gateway>(o);
  for (Capability cap : kAllCapabilities) {
    const BackendConfig& b = c.backend(cap);
    SlotConfig slot;
    slot.rate_limit_per_minute = b.rate_limit_per_minute;
    std::shared_ptr<Backend> backend;
    if (b.kind == "http") {
      backend = std::make_shared<HttpBackend>(b.endpoint, b.model, b.auth_env, b.timeout_seconds);
    } else if (b.kind == "subprocess") {
      backend = std::make_shared<SubprocessBackend>(b.command, b.model);
    } else {
      backend = mock_backend(cap, b);
    }
    if (!b.model.empty()) slot.default_params["model"] = b.model;
    gw->register_backend(cap, std::move(backend), slot);
  }
  return gw;
}

}  // namespace figforge
