#include "travel/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "travel/error.hpp"
#include "travel/openai_backend.hpp"
#include "travel/recommendation.hpp"

#ifndef TRAVEL_AGENT_DATA_DIR
#define TRAVEL_AGENT_DATA_DIR "data"
#endif

namespace travel {

using nlohmann::json;
namespace fs = std::filesystem;

AppConfig default_app_config() {
  AppConfig c;
  c.spots_path = fs::path(TRAVEL_AGENT_DATA_DIR) / "kyoto_spots.jsonl";
  return c;
}

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(Errc::ConfigError, what); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (allowed.count(key) == 0) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("bad value for '" + std::string(key) + "' in " + where);
  }
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

Phase phase_from_key(const std::string& key, const std::string& where) {
  auto p = parse_phase(key);
  if (!p || *p == Phase::Done) config_error("unknown phase '" + key + "' in " + where);
  return *p;
}

SlotName slot_from_key(const std::string& key, const std::string& where) {
  auto s = parse_slot(key);
  if (!s) config_error("unknown slot '" + key + "' in " + where);
  return *s;
}

json lexicon_to_json(const std::vector<LexiconEntry>& entries) {
  json out = json::object();
  for (const auto& e : entries) out[e.normalized] = e.terms;
  return out;
}

std::vector<LexiconEntry> lexicon_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) config_error(where + " must map values to term lists");
  std::vector<LexiconEntry> out;
  for (const auto& [key, terms] : j.items()) {
    LexiconEntry e{key, {}};
    try {
      e.terms = terms.get<std::vector<std::string>>();
    } catch (const json::exception&) {
      config_error("terms for '" + key + "' in " + where + " must be strings");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void parse_scenario(const json& j, ScenarioConfig& s) {
  check_keys(j, {"recovery_cap", "min_filled_for_recommendation", "slot_defaults", "phases"}, "scenario");
  read(j, "recovery_cap", s.recovery_cap, "scenario");
  read(j, "min_filled_for_recommendation", s.min_filled_for_recommendation, "scenario");
  if (j.contains("slot_defaults")) {
    check_keys(j["slot_defaults"], {"travel_purpose", "companions", "season"}, "scenario.slot_defaults");
    for (const auto& [key, value] : j["slot_defaults"].items()) {
      if (!value.is_string()) config_error("slot default must be a string");
      s.slot_defaults[slot_from_key(key, "scenario.slot_defaults")] = value.get<std::string>();
    }
  }
  if (j.contains("phases")) {
    if (!j["phases"].is_object()) config_error("scenario.phases must be an object");
    for (const auto& [key, value] : j["phases"].items()) {
      const Phase p = phase_from_key(key, "scenario.phases");
      auto& goal = s.goals[p];
      goal.phase = p;
      const std::string where = "scenario.phases." + key;
      check_keys(value, {"instruction", "max_system_turns"}, where);
      read(value, "instruction", goal.instruction, where);
      read(value, "max_system_turns", goal.max_system_turns, where);
    }
  }
}

void parse_templates(const json& j, TemplateSet& t) {
  if (!j.is_object()) config_error("templates must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "question_fallbacks") {
      if (!value.is_object()) config_error("templates.question_fallbacks must be an object");
      for (const auto& [slot, text] : value.items()) {
        if (!text.is_string()) config_error("question fallback must be a string");
        t.question_fallbacks[slot_from_key(slot, "templates.question_fallbacks")] = text.get<std::string>();
      }
    } else if (key == "question_fallback_complete") {
      read(j, "question_fallback_complete", t.question_fallback_complete, "templates");
    } else if (key == "farewell") {
      read(j, "farewell", t.farewell, "templates");
    } else {
      const Phase p = phase_from_key(key, "templates");
      auto& tmpl = t.by_phase[p];
      tmpl.phase = p;
      const std::string where = "templates." + key;
      check_keys(value, {"directive", "style_constraints", "fallback"}, where);
      read(value, "directive", tmpl.system_directive, where);
      read(value, "style_constraints", tmpl.style_constraints, where);
      read(value, "fallback", tmpl.fallback, where);
    }
  }
}

void parse_lexicons(const json& j, Lexicons& lx) {
  check_keys(j,
             {"seasons", "companions", "purposes", "confusion_markers", "name_intros", "name_intros_capitalized",
              "name_stopwords"},
             "lexicons");
  if (j.contains("seasons")) lx.seasons = lexicon_from_json(j["seasons"], "lexicons.seasons");
  if (j.contains("companions")) lx.companions = lexicon_from_json(j["companions"], "lexicons.companions");
  if (j.contains("purposes")) lx.purposes = lexicon_from_json(j["purposes"], "lexicons.purposes");
  read(j, "confusion_markers", lx.confusion_markers, "lexicons");
  read(j, "name_intros", lx.name_intros, "lexicons");
  read(j, "name_intros_capitalized", lx.name_intros_capitalized, "lexicons");
  read(j, "name_stopwords", lx.name_stopwords, "lexicons");
}

}  // namespace

AppConfig parse_config(const json& doc, const fs::path& base_dir) {
  AppConfig c = default_app_config();
  check_keys(doc, {"scenario", "templates", "lexicons", "detector", "judge", "backend", "recommendation", "server"},
             "configuration");
  auto& e = c.engine;
  if (doc.contains("scenario")) parse_scenario(doc["scenario"], e.scenario);
  if (doc.contains("templates")) parse_templates(doc["templates"], e.templates);
  if (doc.contains("lexicons")) parse_lexicons(doc["lexicons"], e.lexicons);
  if (doc.contains("detector")) {
    const auto& d = doc["detector"];
    check_keys(d, {"threshold", "max_repetition_overlap", "min_alpha_ratio", "use_prompted", "context_turns"},
               "detector");
    read(d, "threshold", e.detector.threshold, "detector");
    read(d, "max_repetition_overlap", e.detector.max_repetition_overlap, "detector");
    read(d, "min_alpha_ratio", e.detector.min_alpha_ratio, "detector");
    read(d, "use_prompted", e.detector.use_prompted, "detector");
    read(d, "context_turns", e.detector.context_turns, "detector");
  }
  if (doc.contains("judge")) {
    check_keys(doc["judge"], {"instructions", "query"}, "judge");
    read(doc["judge"], "instructions", e.judge.instructions, "judge");
    read(doc["judge"], "query", e.judge.query, "judge");
  }
  if (doc.contains("backend")) {
    const auto& b = doc["backend"];
    check_keys(b,
               {"endpoint_url", "model_name", "api_key", "deadline_ms", "max_history_turns", "temperature",
                "max_utterance_chars"},
               "backend");
    read(b, "endpoint_url", e.backend.endpoint_url, "backend");
    read(b, "model_name", e.backend.model_name, "backend");
    read(b, "api_key", e.backend.api_key, "backend");
    read(b, "deadline_ms", e.backend.deadline_ms, "backend");
    read(b, "max_history_turns", e.backend.max_history_turns, "backend");
    read(b, "temperature", e.backend.temperature, "backend");
    read(b, "max_utterance_chars", e.backend.max_utterance_chars, "backend");
  }
  if (doc.contains("recommendation")) {
    const auto& r = doc["recommendation"];
    check_keys(r, {"spots_path", "plan_size", "weights"}, "recommendation");
    std::string spots;
    read(r, "spots_path", spots, "recommendation");
    if (!spots.empty()) c.spots_path = resolve(base_dir, spots);
    read(r, "plan_size", e.plan_size, "recommendation");
    if (r.contains("weights")) {
      const auto& w = r["weights"];
      check_keys(w, {"purpose", "season", "companions"}, "recommendation.weights");
      read(w, "purpose", e.weights.purpose, "recommendation.weights");
      read(w, "season", e.weights.season, "recommendation.weights");
      read(w, "companions", e.weights.companions, "recommendation.weights");
    }
  }
  if (doc.contains("server")) {
    const auto& s = doc["server"];
    check_keys(s, {"port", "max_sessions", "log_path", "fsync", "session_time_limit_ms", "static_dir"}, "server");
    read(s, "port", c.server.port, "server");
    read(s, "max_sessions", c.server.max_sessions, "server");
    std::string log_path;
    read(s, "log_path", log_path, "server");
    if (!log_path.empty()) c.server.log_path = resolve(base_dir, log_path);
    read(s, "fsync", c.server.fsync, "server");
    read(s, "session_time_limit_ms", c.server.session_time_limit_ms, "server");
    std::string static_dir;
    read(s, "static_dir", static_dir, "server");
    if (!static_dir.empty()) c.server.static_dir = resolve(base_dir, static_dir);
  }
  validate_engine_config(e);
  return c;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot read configuration file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) config_error("configuration file " + path.string() + " is not valid JSON");
  return parse_config(doc, path.parent_path());
}

json config_to_json(const AppConfig& c) {
  const auto& e = c.engine;
  json phases = json::object();
  for (const auto& [phase, goal] : e.scenario.goals) {
    phases[std::string(phase_key(phase))] = {{"instruction", goal.instruction},
                                             {"max_system_turns", goal.max_system_turns}};
  }
  json defaults = json::object();
  for (const auto& [slot, value] : e.scenario.slot_defaults) defaults[std::string(slot_key(slot))] = value;

  json templates = json::object();
  for (const auto& [phase, t] : e.templates.by_phase) {
    templates[std::string(phase_key(phase))] = {
        {"directive", t.system_directive}, {"style_constraints", t.style_constraints}, {"fallback", t.fallback}};
  }
  json qf = json::object();
  for (const auto& [slot, text] : e.templates.question_fallbacks) qf[std::string(slot_key(slot))] = text;
  templates["question_fallbacks"] = qf;
  templates["question_fallback_complete"] = e.templates.question_fallback_complete;
  templates["farewell"] = e.templates.farewell;

  return json{
      {"scenario",
       {{"recovery_cap", e.scenario.recovery_cap},
        {"min_filled_for_recommendation", e.scenario.min_filled_for_recommendation},
        {"slot_defaults", defaults},
        {"phases", phases}}},
      {"templates", templates},
      {"lexicons",
       {{"seasons", lexicon_to_json(e.lexicons.seasons)},
        {"companions", lexicon_to_json(e.lexicons.companions)},
        {"purposes", lexicon_to_json(e.lexicons.purposes)},
        {"confusion_markers", e.lexicons.confusion_markers},
        {"name_intros", e.lexicons.name_intros},
        {"name_intros_capitalized", e.lexicons.name_intros_capitalized},
        {"name_stopwords", e.lexicons.name_stopwords}}},
      {"detector",
       {{"threshold", e.detector.threshold},
        {"max_repetition_overlap", e.detector.max_repetition_overlap},
        {"min_alpha_ratio", e.detector.min_alpha_ratio},
        {"use_prompted", e.detector.use_prompted},
        {"context_turns", e.detector.context_turns}}},
      {"judge", {{"instructions", e.judge.instructions}, {"query", e.judge.query}}},
      {"backend",
       {{"endpoint_url", e.backend.endpoint_url},
        {"model_name", e.backend.model_name},
        {"api_key", e.backend.api_key},
        {"deadline_ms", e.backend.deadline_ms},
        {"max_history_turns", e.backend.max_history_turns},
        {"temperature", e.backend.temperature},
        {"max_utterance_chars", e.backend.max_utterance_chars}}},
      {"recommendation",
       {{"spots_path", c.spots_path.string()},
        {"plan_size", e.plan_size},
        {"weights",
         {{"purpose", e.weights.purpose}, {"season", e.weights.season}, {"companions", e.weights.companions}}}}},
      {"server",
       {{"port", c.server.port},
        {"max_sessions", c.server.max_sessions},
        {"log_path", c.server.log_path.string()},
        {"fsync", c.server.fsync},
        {"session_time_limit_ms", c.server.session_time_limit_ms},
        {"static_dir", c.server.static_dir.string()}}}};
}

void apply_env_overrides(AppConfig& config, const EnvLookup& getenv) {
  auto value = [&](const char* name) -> std::optional<std::string> {
    const char* v = getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (auto v = value("AGENT_BACKEND_URL")) config.engine.backend.endpoint_url = *v;
  if (auto v = value("AGENT_BACKEND_KEY")) config.engine.backend.api_key = *v;
  if (auto v = value("AGENT_MODEL")) config.engine.backend.model_name = *v;
  if (auto v = value("AGENT_DEADLINE_MS")) {
    try {
      config.engine.backend.deadline_ms = std::stoll(*v);
    } catch (const std::exception&) {
      config_error("AGENT_DEADLINE_MS is not an integer: " + *v);
    }
  }
  if (auto v = value("AGENT_SPOTS_PATH")) config.spots_path = *v;
  validate_backend_config(config.engine.backend);
}

void apply_env_overrides(AppConfig& config) {
  apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
}

PipelineDeps make_pipeline_deps(const AppConfig& config) {
  validate_engine_config(config.engine);
  PipelineDeps deps;
  deps.config = std::make_shared<const EngineConfig>(config.engine);
  auto spots = load_spots(config.spots_path);
  if (spots.empty()) throw Error(Errc::EmptyKnowledgeBase, config.spots_path.string() + " has no spots");
  deps.spots = std::make_shared<const std::vector<SpotRecord>>(std::move(spots));
  deps.backend = make_backend(config.engine.backend);
  return deps;
}

}  // namespace travel
