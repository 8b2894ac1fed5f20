#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "travel/domain.hpp"
#include "travel/scenario.hpp"
#include "travel/transcript_log.hpp"

namespace travel {

// A scripted customer. Replies are picked by trigger: the phase key
// ("greeting", "ice_break", "recommendation", "closing") or, during the
// question phase, the pending item ("purpose", "companions", "season").
// Each trigger's list is cycled in order.
struct PersonaScript {
  std::string name;
  std::map<std::string, std::vector<std::string>> replies;
  double noise = 0.0;  // probability of replacing a reply with garbled input

  friend bool operator==(const PersonaScript&, const PersonaScript&) = default;
};

inline constexpr std::array<std::string_view, 7> kPersonaTriggers = {
    "greeting", "ice_break", "purpose", "companions", "season", "recommendation", "closing"};

// {"personas": [{"name", "noise", "replies": {trigger: [text, ...]}}]}
// Throws ConfigError unless every trigger has at least one reply and noise
// lies in [0, 1].
std::vector<PersonaScript> parse_personas(const nlohmann::json& doc);
std::vector<PersonaScript> load_personas(const std::filesystem::path& path);
void validate_persona(const PersonaScript& persona);

std::uint64_t splitmix64(std::uint64_t x);
// Uniform in [0, 1) from the top 53 bits.
double unit_draw(std::mt19937_64& rng);

// Symbol-and-digit noise, or an empty string.
std::string garbled_utterance(std::mt19937_64& rng);

std::string persona_trigger(const Session& session);

struct SimReport {
  std::size_t dialogues_run = 0;
  double completion_rate = 0.0;
  double slot_fill_rate = 0.0;  // question slots filled from customer evidence, / 3
  std::size_t customer_turns = 0;
  std::size_t breakdowns_detected = 0;
  std::size_t recoveries_emitted = 0;
  std::int64_t latency_p50_ms = 0;
  std::int64_t latency_p99_ms = 0;
  std::map<Phase, double> phase_histogram;  // mean system turns per phase

  friend bool operator==(const SimReport&, const SimReport&) = default;
};

nlohmann::json report_to_json(const SimReport& report);
std::string report_table(const SimReport& report);

struct SimDialogue {
  std::string persona;
  Session session;
};

struct SimOptions {
  std::size_t dialogues_per_persona = 1;
  std::uint64_t seed = 0;
  TranscriptLog* log = nullptr;  // optional transcript sink
  // Safety stop for a misconfigured scenario; a dialogue hitting it counts
  // as not completed.
  std::size_t max_customer_turns = 200;
};

struct SimResult {
  SimReport report;
  std::vector<SimDialogue> dialogues;  // persona order, then dialogue index
};

// Session ids are "sim-<persona>-<index>"; the session seed and the noise
// stream derive from (seed, persona index, dialogue index). Time comes from
// a virtual clock advanced by modeled backend latency, so the result depends
// only on the inputs. deps.clock is ignored.
SimDialogue simulate_dialogue(const PersonaScript& persona, std::size_t persona_index, std::size_t dialogue_index,
                              const PipelineDeps& deps, const SimOptions& options);
SimResult simulate(const std::vector<PersonaScript>& personas, const PipelineDeps& deps, const SimOptions& options);

SimReport summarize(const std::vector<SimDialogue>& dialogues);

// Nearest-rank percentile of a non-empty sample; p in (0, 100].
std::int64_t nearest_rank_percentile(std::vector<std::int64_t> values, double p);

}  // namespace travel
