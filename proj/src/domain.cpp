#include "travel/domain.hpp"

#include <algorithm>
#include <mutex>
#include <random>

#include "travel/error.hpp"

namespace travel {

std::optional<Phase> next_phase(Phase p) {
  if (p == Phase::Done) return std::nullopt;
  return static_cast<Phase>(phase_rank(p) + 1);
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Greeting: return "Greeting";
    case Phase::IceBreak: return "IceBreak";
    case Phase::Question: return "Question";
    case Phase::Recommendation: return "Recommendation";
    case Phase::Closing: return "Closing";
    case Phase::Done: return "Done";
  }
  return "Done";
}

std::string_view phase_key(Phase p) {
  switch (p) {
    case Phase::Greeting: return "greeting";
    case Phase::IceBreak: return "ice_break";
    case Phase::Question: return "question";
    case Phase::Recommendation: return "recommendation";
    case Phase::Closing: return "closing";
    case Phase::Done: return "done";
  }
  return "done";
}

std::optional<Phase> parse_phase(std::string_view s) {
  for (Phase p : kAllPhases) {
    if (s == phase_name(p) || s == phase_key(p)) return p;
  }
  return std::nullopt;
}

std::string_view slot_key(SlotName s) {
  switch (s) {
    case SlotName::CustomerName: return "customer_name";
    case SlotName::TravelPurpose: return "travel_purpose";
    case SlotName::Companions: return "companions";
    case SlotName::Season: return "season";
  }
  return "";
}

std::string_view slot_label(SlotName s) {
  switch (s) {
    case SlotName::CustomerName: return "name";
    case SlotName::TravelPurpose: return "purpose";
    case SlotName::Companions: return "companions";
    case SlotName::Season: return "season";
  }
  return "";
}

std::optional<SlotName> parse_slot(std::string_view s) {
  for (SlotName n : {SlotName::CustomerName, SlotName::TravelPurpose, SlotName::Companions, SlotName::Season}) {
    if (s == slot_key(n) || s == slot_label(n)) return n;
  }
  return std::nullopt;
}

std::string_view detector_name(DetectorId d) {
  switch (d) {
    case DetectorId::Prompted: return "Prompted";
    case DetectorId::Heuristic: return "Heuristic";
    case DetectorId::Combined: return "Combined";
  }
  return "";
}

std::optional<DetectorId> parse_detector(std::string_view s) {
  for (DetectorId d : {DetectorId::Prompted, DetectorId::Heuristic, DetectorId::Combined}) {
    if (s == detector_name(d)) return d;
  }
  return std::nullopt;
}

std::string_view speaker_name(Speaker s) { return s == Speaker::System ? "System" : "Customer"; }

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "System" || s == "system") return Speaker::System;
  if (s == "Customer" || s == "customer") return Speaker::Customer;
  return std::nullopt;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Backend: return "Backend";
    case Provenance::MockBackend: return "MockBackend";
    case Provenance::Recovery: return "Recovery";
    case Provenance::Fallback: return "Fallback";
    case Provenance::Scripted: return "Scripted";
  }
  return "";
}

std::optional<Provenance> parse_provenance(std::string_view s) {
  for (Provenance p : {Provenance::Backend, Provenance::MockBackend, Provenance::Recovery, Provenance::Fallback,
                       Provenance::Scripted}) {
    if (s == provenance_name(p)) return p;
  }
  return std::nullopt;
}

std::string_view status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::Active: return "Active";
    case SessionStatus::Completed: return "Completed";
    case SessionStatus::Aborted: return "Aborted";
  }
  return "";
}

std::optional<SessionStatus> parse_status(std::string_view s) {
  for (SessionStatus st : {SessionStatus::Active, SessionStatus::Completed, SessionStatus::Aborted}) {
    if (s == status_name(st)) return st;
  }
  return std::nullopt;
}

namespace {

std::string random_session_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::lock_guard lock(mu);
  std::uint64_t hi = gen();
  std::uint64_t lo = gen();
  std::string id;
  id.reserve(32);
  for (std::uint64_t part : {hi, lo}) {
    for (int shift = 60; shift >= 0; shift -= 4) id.push_back(kHex[(part >> shift) & 0xF]);
  }
  return id;
}

}  // namespace

Session new_session(std::uint64_t seed) { return new_session(seed, random_session_id()); }

Session new_session(std::uint64_t seed, std::string id) {
  Session s;
  s.id = std::move(id);
  s.rng_seed = seed;
  return s;
}

Session append_turn(Session session, Turn turn) {
  if (session.status != SessionStatus::Active) {
    throw Error(Errc::SessionClosed, "session " + session.id + " is " + std::string(status_name(session.status)));
  }
  if (turn.index != session.transcript.size()) {
    throw Error(Errc::IndexMismatch, "expected turn index " + std::to_string(session.transcript.size()) + ", got " +
                                         std::to_string(turn.index));
  }
  const bool system = turn.speaker == Speaker::System;
  if (system != turn.latency_ms.has_value()) {
    throw Error(Errc::InvalidTurn, "latency_ms must be present exactly on system turns");
  }
  if (system == turn.breakdown.has_value()) {
    throw Error(Errc::InvalidTurn, "breakdown verdict must be present exactly on customer turns");
  }
  if (turn.latency_ms && *turn.latency_ms < 0) throw Error(Errc::InvalidTurn, "negative latency");

  if (system) {
    if (turn.provenance == Provenance::Recovery) {
      ++session.recovery_total;
      ++session.consecutive_recoveries;
    } else {
      session.consecutive_recoveries = 0;
    }
  }
  session.transcript.push_back(std::move(turn));
  return session;
}

Session fill_slot(Session session, SlotName name, SlotValue value) {
  if (value.normalized.empty()) throw Error(Errc::EmptySlotValue, std::string(slot_key(name)));
  if (auto it = session.slots.find(name); it != session.slots.end() && value.confidence < it->second.confidence) {
    throw Error(Errc::LowerConfidenceOverwrite, std::string(slot_key(name)) + ": " +
                                                    std::to_string(value.confidence) + " < " +
                                                    std::to_string(it->second.confidence));
  }
  session.slots[name] = std::move(value);
  return session;
}

bool slots_complete(const Session& session) { return filled_question_slots(session) == kQuestionSlots.size(); }

std::size_t filled_question_slots(const Session& session) {
  return static_cast<std::size_t>(std::count_if(kQuestionSlots.begin(), kQuestionSlots.end(), [&](SlotName n) {
    const auto* v = find_slot(session, n);
    return v != nullptr && !v->normalized.empty();
  }));
}

const SlotValue* find_slot(const Session& session, SlotName name) {
  auto it = session.slots.find(name);
  return it == session.slots.end() ? nullptr : &it->second;
}

std::optional<std::size_t> last_customer_index(const Session& session) {
  for (auto it = session.transcript.rbegin(); it != session.transcript.rend(); ++it) {
    if (it->speaker == Speaker::Customer) return it->index;
  }
  return std::nullopt;
}

std::size_t system_turns_in_phase(const Session& session, Phase phase) {
  return static_cast<std::size_t>(std::count_if(session.transcript.begin(), session.transcript.end(), [&](const Turn& t) {
    return t.speaker == Speaker::System && t.phase == phase;
  }));
}

}  // namespace travel
