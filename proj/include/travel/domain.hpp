#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace travel {

// Scenario phases in dialogue order. Done is terminal.
enum class Phase { Greeting, IceBreak, Question, Recommendation, Closing, Done };

inline constexpr std::array<Phase, 6> kAllPhases = {Phase::Greeting, Phase::IceBreak, Phase::Question,
                                                    Phase::Recommendation, Phase::Closing, Phase::Done};
inline constexpr std::array<Phase, 5> kScenarioPhases = {Phase::Greeting, Phase::IceBreak, Phase::Question,
                                                         Phase::Recommendation, Phase::Closing};

constexpr int phase_rank(Phase p) { return static_cast<int>(p); }
std::optional<Phase> next_phase(Phase p);

std::string_view phase_name(Phase p);           // "Greeting", "IceBreak", ...
std::string_view phase_key(Phase p);            // "greeting", "ice_break", ...
std::optional<Phase> parse_phase(std::string_view s);  // accepts either form

enum class SlotName { CustomerName, TravelPurpose, Companions, Season };

// The three items that must be known before recommending.
inline constexpr std::array<SlotName, 3> kQuestionSlots = {SlotName::TravelPurpose, SlotName::Companions,
                                                           SlotName::Season};

std::string_view slot_key(SlotName s);    // "customer_name", "travel_purpose", ...
std::string_view slot_label(SlotName s);  // "name", "purpose", "companions", "season"
std::optional<SlotName> parse_slot(std::string_view s);

struct SlotValue {
  std::string normalized;
  std::string raw_evidence;
  double confidence = 0.0;
  std::size_t turn_index = 0;

  // Values filled by the scenario when the question budget runs out carry no
  // evidence and zero confidence.
  bool is_default() const { return raw_evidence.empty() && confidence == 0.0; }

  friend bool operator==(const SlotValue&, const SlotValue&) = default;
};

using SlotMap = std::map<SlotName, SlotValue>;
using SlotUpdate = std::pair<SlotName, SlotValue>;

enum class DetectorId { Prompted, Heuristic, Combined };
std::string_view detector_name(DetectorId d);
std::optional<DetectorId> parse_detector(std::string_view s);

struct BreakdownVerdict {
  bool is_breakdown = false;
  double score = 0.0;
  std::string reason;
  DetectorId detector_id = DetectorId::Heuristic;

  friend bool operator==(const BreakdownVerdict&, const BreakdownVerdict&) = default;
};

enum class Speaker { System, Customer };
std::string_view speaker_name(Speaker s);
std::optional<Speaker> parse_speaker(std::string_view s);

enum class Provenance { Backend, MockBackend, Recovery, Fallback, Scripted };
std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

struct Turn {
  std::size_t index = 0;
  Speaker speaker = Speaker::System;
  std::string text;
  Phase phase = Phase::Greeting;
  std::int64_t timestamp_ms = 0;
  std::optional<std::int64_t> latency_ms;       // system turns only
  std::optional<BreakdownVerdict> breakdown;    // customer turns only
  Provenance provenance = Provenance::Scripted;
  // Slot writes made while processing this turn, in application order. Kept
  // so that replay does not depend on the extraction lexicons.
  std::vector<SlotUpdate> slot_updates;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class SessionStatus { Active, Completed, Aborted };
std::string_view status_name(SessionStatus s);
std::optional<SessionStatus> parse_status(std::string_view s);

struct Session {
  std::string id;
  std::vector<Turn> transcript;
  Phase phase = Phase::Greeting;
  SlotMap slots;
  std::size_t recovery_total = 0;
  std::size_t consecutive_recoveries = 0;
  SessionStatus status = SessionStatus::Active;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const Session&, const Session&) = default;
};

// Fresh session with a process-unique random id.
Session new_session(std::uint64_t seed);
Session new_session(std::uint64_t seed, std::string id);

// Throws SessionClosed, IndexMismatch or InvalidTurn.
Session append_turn(Session session, Turn turn);

// Throws EmptySlotValue or LowerConfidenceOverwrite.
Session fill_slot(Session session, SlotName name, SlotValue value);

bool slots_complete(const Session& session);
std::size_t filled_question_slots(const Session& session);

// Convenience accessors used throughout the engine.
const SlotValue* find_slot(const Session& session, SlotName name);
std::optional<std::size_t> last_customer_index(const Session& session);
std::size_t system_turns_in_phase(const Session& session, Phase phase);

}  // namespace travel
