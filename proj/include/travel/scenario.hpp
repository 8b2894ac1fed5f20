#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "travel/domain.hpp"
#include "travel/nlg.hpp"
#include "travel/recommendation.hpp"
#include "travel/understanding.hpp"

namespace travel {

struct PhaseGoal {
  Phase phase = Phase::Greeting;
  std::string instruction;
  std::size_t max_system_turns = 1;
};

struct ScenarioConfig {
  std::map<Phase, PhaseGoal> goals;  // one per non-Done phase
  std::size_t recovery_cap = 2;
  std::size_t min_filled_for_recommendation = 1;
  // Used for question items still missing when the question budget runs out.
  std::map<SlotName, std::string> slot_defaults;

  const PhaseGoal& goal(Phase phase) const;
};

ScenarioConfig default_scenario();
void validate_scenario(const ScenarioConfig& scenario);

enum class TransitionReason { GoalMet, TurnBudgetExhausted, Stay };
std::string_view transition_reason_name(TransitionReason r);

struct TransitionDecision {
  bool advance = false;
  TransitionReason reason = TransitionReason::Stay;
  friend bool operator==(const TransitionDecision&, const TransitionDecision&) = default;
};

// Throws TerminalPhase on Done.
TransitionDecision phase_complete(const Session& session, const ScenarioConfig& scenario);

// Moves to the immediate successor phase. Leaving Question on budget fills
// the missing items with their defaults; Closing -> Done completes the
// session. Throws NotReady when phase_complete says stay.
Session advance_phase(Session session, const ScenarioConfig& scenario);

// ---------------------------------------------------------------------------
// Per-turn pipeline

struct EngineConfig {
  ScenarioConfig scenario = default_scenario();
  TemplateSet templates = default_templates();
  Lexicons lexicons = default_lexicons();
  DetectorConfig detector;
  JudgeTemplate judge = default_judge_template();
  BackendConfig backend;
  RankingWeights weights;
  std::size_t plan_size = kDefaultPlanSize;
};

void validate_engine_config(const EngineConfig& config);

using Clock = std::function<std::int64_t()>;
std::int64_t wall_clock_ms();

struct PipelineDeps {
  std::shared_ptr<const EngineConfig> config;
  std::shared_ptr<const std::vector<SpotRecord>> spots;
  std::shared_ptr<CompletionBackend> backend;
  Clock clock = wall_clock_ms;
  // Sees every dialogue prompt before it is sent.
  std::function<void(const RenderedPrompt&)> on_prompt;
};

// Backend time available to one customer turn, shared by the breakdown judge
// and the reply generation.
class TurnBudget {
 public:
  explicit TurnBudget(std::int64_t total_ms) : total_ms_(total_ms) {}
  std::int64_t remaining_ms() const { return std::max<std::int64_t>(0, total_ms_ - spent_ms_); }
  std::int64_t spent_ms() const { return spent_ms_; }
  void spend(std::int64_t ms) { spent_ms_ += std::max<std::int64_t>(0, ms); }

 private:
  std::int64_t total_ms_;
  std::int64_t spent_ms_ = 0;
};

struct TurnResult {
  Session session;
  Turn reply;
};

// Generates the greeting that opens a fresh session.
TurnResult open_session(Session session, const PipelineDeps& deps);

// Appends the customer turn with its breakdown verdict and, unless the turn
// will be answered with a recovery, applies slot extractions.
Session accept_customer_turn(Session session, std::string_view user_text, const PipelineDeps& deps,
                             TurnBudget& budget);

// Produces the system reply to a session whose last turn is a customer turn:
// recovery, or phase bookkeeping followed by a deadline-bounded generation.
TurnResult respond(Session session, const PipelineDeps& deps, TurnBudget& budget);

TurnResult run_turn(Session session, std::string_view user_text, const PipelineDeps& deps);

bool awaiting_reply(const Session& session);

// Current plan for sessions at or past Recommendation.
std::optional<TravelPlan> current_plan(const Session& session, const PipelineDeps& deps);

// Re-applies one recorded turn through the same state updates the live
// pipeline performs, without any backend. Used by replay.
Session apply_recorded_turn(Session session, const Turn& turn, const ScenarioConfig& scenario);

}  // namespace travel
