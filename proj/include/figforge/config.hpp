#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "figforge/gateway.hpp"
#include "figforge/refine.hpp"
#include "figforge/synthesis.hpp"

namespace figforge {

// One [backends.<slot>] table. `kind` is mock, http or subprocess.
struct BackendConfig {
  std::string kind = "mock";
  std::string endpoint;  // http
  std::string model;     // http, subprocess
  std::string auth_env;  // http: name of the variable holding the bearer token
  std::string command;   // subprocess
  int timeout_seconds = 120;
  int rate_limit_per_minute = 0;
  int ocr_drop_first_char_every = 0;  // mock OCR only: simulated misreads

  friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

struct PipelineConfig {
  int iterations = 5;
  double threshold = 8.5;
  double epsilon = 0.05;
  std::string style;  // empty: the built-in default style
  bool skip_text_refinement = false;
  double raster_scale = 1.0;
  MatchRule match;
  int workers = 2;  // batch fan-out

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct JudgeConfig {
  std::string mode = "score";  // score | pairwise | extended

  friend bool operator==(const JudgeConfig&, const JudgeConfig&) = default;
};

struct GatewayConfig {
  std::optional<std::filesystem::path> cache_dir;  // default: <run dir>/cache
  int max_attempts = 5;
  int base_delay_ms = 1000;

  friend bool operator==(const GatewayConfig&, const GatewayConfig&) = default;
};

struct Config {
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  JudgeConfig judge;
  GatewayConfig gateway;
  std::map<Capability, BackendConfig> backends;  // missing slots are mocks

  const BackendConfig& backend(Capability c) const;

  friend bool operator==(const Config&, const Config&) = default;
};

// Parses TOML text. Unknown keys and wrong types are ValidationErrors.
Config parse_config(std::string_view toml_text);
Config load_config(const std::filesystem::path& path);

// Range and consistency checks; throws ValidationError.
void validate(const Config& config);

RefineOptions refine_options(const Config& config);
Stage2Options stage2_options(const Config& config);
StyleDescriptor requested_style(const Config& config);

// Everything needed to replay a run. Credentials never appear, only the
// names of the variables that hold them.
nlohmann::ordered_json config_snapshot(const Config& config);

// Registers one backend per slot as configured.
std::unique_ptr<Gateway> build_gateway(const Config& config, std::optional<std::filesystem::path> cache_dir,
                                       SleepFn sleep = {});

}  // namespace figforge
