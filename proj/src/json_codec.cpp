#include "travel/json_codec.hpp"

#include "travel/error.hpp"

namespace travel {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Error(Errc::ParseError, std::string("missing field ") + name);
  return j.at(name);
}

template <typename T>
T get(const json& j, const char* name) {
  try {
    return field(j, name).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::ParseError, std::string("bad field ") + name);
  }
}

template <typename Enum, typename Parser>
Enum get_enum(const json& j, const char* name, Parser parse) {
  auto v = parse(get<std::string>(j, name));
  if (!v) throw Error(Errc::ParseError, std::string("bad enum value in ") + name);
  return *v;
}

}  // namespace

json slot_value_to_json(const SlotValue& v) {
  return json{{"normalized", v.normalized},
              {"raw_evidence", v.raw_evidence},
              {"confidence", v.confidence},
              {"turn_index", v.turn_index}};
}

SlotValue slot_value_from_json(const json& j) {
  return SlotValue{get<std::string>(j, "normalized"), get<std::string>(j, "raw_evidence"), get<double>(j, "confidence"),
                   get<std::size_t>(j, "turn_index")};
}

json slots_to_json(const SlotMap& slots) {
  json out = json::object();
  for (const auto& [name, value] : slots) out[std::string(slot_key(name))] = slot_value_to_json(value);
  return out;
}

SlotMap slots_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "slots must be an object");
  SlotMap out;
  for (const auto& [key, value] : j.items()) {
    auto name = parse_slot(key);
    if (!name) throw Error(Errc::ParseError, "unknown slot " + key);
    out[*name] = slot_value_from_json(value);
  }
  return out;
}

json verdict_to_json(const BreakdownVerdict& v) {
  return json{{"is_breakdown", v.is_breakdown},
              {"score", v.score},
              {"reason", v.reason},
              {"detector_id", detector_name(v.detector_id)}};
}

BreakdownVerdict verdict_from_json(const json& j) {
  return BreakdownVerdict{get<bool>(j, "is_breakdown"), get<double>(j, "score"), get<std::string>(j, "reason"),
                          get_enum<DetectorId>(j, "detector_id", parse_detector)};
}

json turn_to_json(const Turn& t) {
  json j{{"index", t.index},
         {"speaker", speaker_name(t.speaker)},
         {"text", t.text},
         {"phase", phase_name(t.phase)},
         {"timestamp_ms", t.timestamp_ms},
         {"provenance", provenance_name(t.provenance)}};
  if (t.latency_ms) j["latency_ms"] = *t.latency_ms;
  if (t.breakdown) j["breakdown"] = verdict_to_json(*t.breakdown);
  if (!t.slot_updates.empty()) {
    json updates = json::array();
    for (const auto& [name, value] : t.slot_updates) {
      auto u = slot_value_to_json(value);
      u["slot"] = slot_key(name);
      updates.push_back(std::move(u));
    }
    j["slot_updates"] = std::move(updates);
  }
  return j;
}

Turn turn_from_json(const json& j) {
  Turn t;
  t.index = get<std::size_t>(j, "index");
  t.speaker = get_enum<Speaker>(j, "speaker", parse_speaker);
  t.text = get<std::string>(j, "text");
  t.phase = get_enum<Phase>(j, "phase", parse_phase);
  t.timestamp_ms = get<std::int64_t>(j, "timestamp_ms");
  t.provenance = get_enum<Provenance>(j, "provenance", parse_provenance);
  if (j.contains("latency_ms")) t.latency_ms = get<std::int64_t>(j, "latency_ms");
  if (j.contains("breakdown")) t.breakdown = verdict_from_json(j.at("breakdown"));
  if (j.contains("slot_updates")) {
    const auto& updates = j.at("slot_updates");
    if (!updates.is_array()) throw Error(Errc::ParseError, "slot_updates must be an array");
    for (const auto& u : updates) {
      t.slot_updates.emplace_back(get_enum<SlotName>(u, "slot", parse_slot), slot_value_from_json(u));
    }
  }
  return t;
}

json session_to_json(const Session& s) {
  json transcript = json::array();
  for (const auto& t : s.transcript) transcript.push_back(turn_to_json(t));
  return json{{"id", s.id},
              {"phase", phase_name(s.phase)},
              {"status", status_name(s.status)},
              {"slots", slots_to_json(s.slots)},
              {"recovery_total", s.recovery_total},
              {"consecutive_recoveries", s.consecutive_recoveries},
              {"rng_seed", s.rng_seed},
              {"transcript", std::move(transcript)}};
}

Session session_from_json(const json& j) {
  Session s;
  s.id = get<std::string>(j, "id");
  s.phase = get_enum<Phase>(j, "phase", parse_phase);
  s.status = get_enum<SessionStatus>(j, "status", parse_status);
  s.slots = slots_from_json(field(j, "slots"));
  s.recovery_total = get<std::size_t>(j, "recovery_total");
  s.consecutive_recoveries = get<std::size_t>(j, "consecutive_recoveries");
  s.rng_seed = get<std::uint64_t>(j, "rng_seed");
  for (const auto& t : field(j, "transcript")) s.transcript.push_back(turn_from_json(t));
  return s;
}

json plan_to_json(const TravelPlan& plan) {
  json items = json::array();
  for (const auto& item : plan.items) {
    items.push_back({{"id", item.spot.id},
                     {"name", item.spot.name},
                     {"area", item.spot.area},
                     {"rank_score", item.rank_score},
                     {"matched", item.matched}});
  }
  return json{{"items", std::move(items)}, {"rationale", plan.rationale}};
}

}  // namespace travel
