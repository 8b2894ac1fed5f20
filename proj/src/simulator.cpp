#include "travel/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "travel/error.hpp"

namespace travel {

using nlohmann::json;

void validate_persona(const PersonaScript& p) {
  if (p.name.empty()) throw Error(Errc::ConfigError, "persona without a name");
  if (!(p.noise >= 0.0 && p.noise <= 1.0)) throw Error(Errc::ConfigError, "persona " + p.name + ": noise not in [0, 1]");
  for (auto trigger : kPersonaTriggers) {
    auto it = p.replies.find(std::string(trigger));
    if (it == p.replies.end() || it->second.empty()) {
      throw Error(Errc::ConfigError, "persona " + p.name + " has no reply for " + std::string(trigger));
    }
  }
  for (const auto& [trigger, _] : p.replies) {
    if (std::find(kPersonaTriggers.begin(), kPersonaTriggers.end(), trigger) == kPersonaTriggers.end()) {
      throw Error(Errc::ConfigError, "persona " + p.name + ": unknown trigger " + trigger);
    }
  }
}

std::vector<PersonaScript> parse_personas(const json& doc) {
  if (!doc.is_object() || !doc.contains("personas") || !doc["personas"].is_array()) {
    throw Error(Errc::ConfigError, "persona document needs a \"personas\" array");
  }
  std::vector<PersonaScript> out;
  for (const auto& j : doc["personas"]) {
    PersonaScript p;
    try {
      p.name = j.at("name").get<std::string>();
      p.noise = j.value("noise", 0.0);
      p.replies = j.at("replies").get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
      throw Error(Errc::ConfigError, std::string("bad persona: ") + e.what());
    }
    validate_persona(p);
    for (const auto& other : out) {
      if (other.name == p.name) throw Error(Errc::ConfigError, "duplicate persona " + p.name);
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw Error(Errc::ConfigError, "persona document is empty");
  return out;
}

std::vector<PersonaScript> load_personas(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read persona file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::ConfigError, "persona file " + path.string() + " is not valid JSON");
  return parse_personas(doc);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string garbled_utterance(std::mt19937_64& rng) {
  static constexpr std::string_view kAlphabet = "@#$%&*+=~0123456789?!";
  if (rng() % 4 == 0) return "";
  const std::size_t length = 3 + rng() % 6;
  std::string out;
  for (std::size_t i = 0; i < length; ++i) out.push_back(kAlphabet[rng() % kAlphabet.size()]);
  return out;
}

std::string persona_trigger(const Session& session) {
  if (session.phase == Phase::Question) {
    const auto pending = pending_question_item(session.slots);
    return std::string(slot_label(pending.value_or(SlotName::TravelPurpose)));
  }
  return std::string(phase_key(session.phase));
}

SimDialogue simulate_dialogue(const PersonaScript& persona, std::size_t persona_index, std::size_t dialogue_index,
                              const PipelineDeps& base, const SimOptions& options) {
  const std::uint64_t stream = splitmix64(splitmix64(splitmix64(options.seed) ^ persona_index) ^ dialogue_index);
  std::mt19937_64 rng(stream);

  std::int64_t now = 0;
  PipelineDeps deps = base;
  deps.clock = [&now] { return now; };

  char id[96];
  std::snprintf(id, sizeof id, "sim-%s-%04zu", persona.name.c_str(), dialogue_index);
  auto opened = open_session(new_session(splitmix64(stream), id), deps);
  Session session = std::move(opened.session);
  if (options.log) persist_turn(*options.log, session, opened.reply);
  now += opened.reply.latency_ms.value_or(0);

  std::map<std::string, std::size_t> used;
  std::size_t customer_turns = 0;
  while (session.status == SessionStatus::Active && customer_turns < options.max_customer_turns) {
    const auto trigger = persona_trigger(session);
    const auto& list = persona.replies.at(trigger);
    std::string text = list[used[trigger]++ % list.size()];
    if (persona.noise > 0.0 && unit_draw(rng) < persona.noise) text = garbled_utterance(rng);

    now += 1000;  // the customer takes a moment to answer
    TurnBudget budget(deps.config->backend.deadline_ms);
    session = accept_customer_turn(std::move(session), text, deps, budget);
    ++customer_turns;
    if (options.log) persist_turn(*options.log, session, session.transcript.back());
    auto result = respond(std::move(session), deps, budget);
    session = std::move(result.session);
    if (options.log) persist_turn(*options.log, session, result.reply);
    now += budget.spent_ms();
  }
  return {persona.name, std::move(session)};
}

SimResult simulate(const std::vector<PersonaScript>& personas, const PipelineDeps& deps, const SimOptions& options) {
  if (options.dialogues_per_persona == 0) throw Error(Errc::ConfigError, "n must be at least 1");
  SimResult result;
  for (std::size_t p = 0; p < personas.size(); ++p) {
    for (std::size_t i = 0; i < options.dialogues_per_persona; ++i) {
      result.dialogues.push_back(simulate_dialogue(personas[p], p, i, deps, options));
    }
  }
  result.report = summarize(result.dialogues);
  return result;
}

std::int64_t nearest_rank_percentile(std::vector<std::int64_t> values, double p) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

SimReport summarize(const std::vector<SimDialogue>& dialogues) {
  SimReport r;
  r.dialogues_run = dialogues.size();
  if (dialogues.empty()) return r;

  std::size_t completed = 0;
  std::size_t evidenced = 0;
  std::vector<std::int64_t> latencies;
  std::map<Phase, std::size_t> phase_turns;
  for (const auto& d : dialogues) {
    const auto& s = d.session;
    if (s.phase == Phase::Done) ++completed;
    for (auto slot : kQuestionSlots) {
      const auto* v = find_slot(s, slot);
      if (v != nullptr && !v->is_default()) ++evidenced;
    }
    for (const auto& t : s.transcript) {
      if (t.speaker == Speaker::Customer) {
        ++r.customer_turns;
        if (t.breakdown && t.breakdown->is_breakdown) ++r.breakdowns_detected;
      } else {
        ++phase_turns[t.phase];
        if (t.provenance == Provenance::Recovery) ++r.recoveries_emitted;
        if (t.latency_ms) latencies.push_back(*t.latency_ms);
      }
    }
  }
  const auto n = static_cast<double>(dialogues.size());
  r.completion_rate = static_cast<double>(completed) / n;
  r.slot_fill_rate = static_cast<double>(evidenced) / (3.0 * n);
  r.latency_p50_ms = nearest_rank_percentile(latencies, 50);
  r.latency_p99_ms = nearest_rank_percentile(latencies, 99);
  for (auto phase : kAllPhases) r.phase_histogram[phase] = static_cast<double>(phase_turns[phase]) / n;
  return r;
}

namespace {

// Fixed-precision formatting keeps reports byte-stable.
std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

json report_to_json(const SimReport& r) {
  json hist = json::object();
  for (const auto& [phase, mean] : r.phase_histogram) hist[std::string(phase_name(phase))] = std::round(mean * 1e4) / 1e4;
  return json{{"dialogues_run", r.dialogues_run},
              {"completion_rate", std::round(r.completion_rate * 1e4) / 1e4},
              {"slot_fill_rate", std::round(r.slot_fill_rate * 1e4) / 1e4},
              {"customer_turns", r.customer_turns},
              {"breakdowns_detected", r.breakdowns_detected},
              {"recoveries_emitted", r.recoveries_emitted},
              {"latency_p50_ms", r.latency_p50_ms},
              {"latency_p99_ms", r.latency_p99_ms},
              {"phase_histogram", hist}};
}

std::string report_table(const SimReport& r) {
  std::ostringstream out;
  auto row = [&out](std::string_view key, const std::string& value) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-22.*s %s\n", static_cast<int>(key.size()), key.data(), value.c_str());
    out << buf;
  };
  row("dialogues_run", std::to_string(r.dialogues_run));
  row("completion_rate", fixed(r.completion_rate, 4));
  row("slot_fill_rate", fixed(r.slot_fill_rate, 4));
  row("customer_turns", std::to_string(r.customer_turns));
  row("breakdowns_detected", std::to_string(r.breakdowns_detected));
  row("recoveries_emitted", std::to_string(r.recoveries_emitted));
  row("latency_p50_ms", std::to_string(r.latency_p50_ms));
  row("latency_p99_ms", std::to_string(r.latency_p99_ms));
  out << "mean system turns per phase\n";
  for (const auto& [phase, mean] : r.phase_histogram) row("  " + std::string(phase_name(phase)), fixed(mean, 2));
  return out.str();
}

}  // namespace travel
