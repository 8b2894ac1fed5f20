#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "travel/scenario.hpp"

namespace travel {

struct ServerConfig {
  std::uint16_t port = 8080;
  std::size_t max_sessions = 256;
  std::filesystem::path log_path = "transcripts.jsonl";
  bool fsync = false;
  // Per-session wall-clock cap; 0 disables it.
  std::int64_t session_time_limit_ms = 0;
  std::filesystem::path static_dir;
};

// Everything the single configuration document carries.
struct AppConfig {
  EngineConfig engine;
  std::filesystem::path spots_path;
  ServerConfig server;
};

// Built-in defaults; spots_path points at the bundled sample knowledge base.
AppConfig default_app_config();

// Missing sections and fields keep their defaults. Relative paths are
// resolved against `base_dir`. Throws ConfigError.
AppConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

nlohmann::json config_to_json(const AppConfig& config);

using EnvLookup = std::function<const char*(const char*)>;

// AGENT_BACKEND_URL, AGENT_BACKEND_KEY, AGENT_MODEL, AGENT_DEADLINE_MS,
// AGENT_SPOTS_PATH.
void apply_env_overrides(AppConfig& config, const EnvLookup& getenv);
void apply_env_overrides(AppConfig& config);

// Loads the knowledge base and picks the backend (mock unless an endpoint is
// configured). Throws ConfigError and knowledge-base errors.
PipelineDeps make_pipeline_deps(const AppConfig& config);

}  // namespace travel
