#include "travel/scenario.hpp"

#include <algorithm>

#include "travel/error.hpp"
#include "travel/text.hpp"

namespace travel {

const PhaseGoal& ScenarioConfig::goal(Phase phase) const {
  auto it = goals.find(phase);
  if (it == goals.end()) throw Error(Errc::ConfigError, "no goal for phase " + std::string(phase_name(phase)));
  return it->second;
}

ScenarioConfig default_scenario() {
  ScenarioConfig s;
  s.goals[Phase::Greeting] = {Phase::Greeting, "Welcome the customer and learn their name.", 2};
  s.goals[Phase::IceBreak] = {Phase::IceBreak, "Make light conversation about Kyoto so the customer feels at ease.",
                              3};
  s.goals[Phase::Question] = {
      Phase::Question, "Find out why they are traveling, who is coming with them, and which season they prefer.", 6};
  s.goals[Phase::Recommendation] = {
      Phase::Recommendation, "Introduce the selected sightseeing spots and say why each one suits the customer.", 3};
  s.goals[Phase::Closing] = {Phase::Closing, "Thank the customer and end the conversation politely.", 1};
  s.slot_defaults = {{SlotName::TravelPurpose, "sightseeing"},
                     {SlotName::Companions, "unspecified"},
                     {SlotName::Season, "any"}};
  return s;
}

void validate_scenario(const ScenarioConfig& scenario) {
  for (Phase p : kScenarioPhases) {
    const auto& g = scenario.goal(p);
    if (g.phase != p) throw Error(Errc::ConfigError, "goal keyed under the wrong phase");
    if (text::is_blank(g.instruction)) throw Error(Errc::ConfigError, "empty instruction for " + std::string(phase_name(p)));
    if (g.max_system_turns == 0) {
      throw Error(Errc::ConfigError, "max_system_turns must be positive for " + std::string(phase_name(p)));
    }
  }
  if (scenario.goals.count(Phase::Done) > 0) throw Error(Errc::ConfigError, "Done has no goal");
  if (scenario.min_filled_for_recommendation > kQuestionSlots.size()) {
    throw Error(Errc::ConfigError, "min_filled_for_recommendation exceeds the number of question items");
  }
  for (SlotName s : kQuestionSlots) {
    auto it = scenario.slot_defaults.find(s);
    if (it == scenario.slot_defaults.end() || text::is_blank(it->second)) {
      throw Error(Errc::ConfigError, "missing default for " + std::string(slot_key(s)));
    }
  }
}

std::string_view transition_reason_name(TransitionReason r) {
  switch (r) {
    case TransitionReason::GoalMet: return "GoalMet";
    case TransitionReason::TurnBudgetExhausted: return "TurnBudgetExhausted";
    case TransitionReason::Stay: return "Stay";
  }
  return "";
}

namespace {

bool non_recovery_reply_in(const Session& session, Phase phase) {
  return std::any_of(session.transcript.begin(), session.transcript.end(), [&](const Turn& t) {
    return t.speaker == Speaker::System && t.phase == phase && t.provenance != Provenance::Recovery;
  });
}

}  // namespace

TransitionDecision phase_complete(const Session& session, const ScenarioConfig& scenario) {
  if (session.phase == Phase::Done) throw Error(Errc::TerminalPhase, "session " + session.id + " is done");

  bool goal_met = false;
  switch (session.phase) {
    case Phase::Greeting: goal_met = find_slot(session, SlotName::CustomerName) != nullptr; break;
    case Phase::IceBreak: goal_met = false; break;
    case Phase::Question: goal_met = slots_complete(session); break;
    case Phase::Recommendation:
    case Phase::Closing: goal_met = non_recovery_reply_in(session, session.phase); break;
    case Phase::Done: break;
  }
  if (goal_met) return {true, TransitionReason::GoalMet};
  if (system_turns_in_phase(session, session.phase) >= scenario.goal(session.phase).max_system_turns) {
    return {true, TransitionReason::TurnBudgetExhausted};
  }
  return {false, TransitionReason::Stay};
}

Session advance_phase(Session session, const ScenarioConfig& scenario) {
  const auto decision = phase_complete(session, scenario);
  if (!decision.advance) {
    throw Error(Errc::NotReady, std::string(phase_name(session.phase)) + " phase is not complete");
  }
  if (session.phase == Phase::Question) {
    const std::size_t evidence_turn = last_customer_index(session).value_or(0);
    for (SlotName s : kQuestionSlots) {
      if (find_slot(session, s) == nullptr) {
        session = fill_slot(std::move(session), s, SlotValue{scenario.slot_defaults.at(s), "", 0.0, evidence_turn});
      }
    }
    if (filled_question_slots(session) < scenario.min_filled_for_recommendation) {
      throw Error(Errc::NotReady, "too few question items filled to recommend");
    }
  }
  session.phase = *next_phase(session.phase);
  if (session.phase == Phase::Done) session.status = SessionStatus::Completed;
  return session;
}

// ---------------------------------------------------------------------------

void validate_engine_config(const EngineConfig& config) {
  validate_scenario(config.scenario);
  validate_templates(config.templates);
  validate_detector_config(config.detector);
  validate_backend_config(config.backend);
  if (config.plan_size == 0) throw Error(Errc::ConfigError, "plan_size must be positive");
  if (config.weights.purpose < 0 || config.weights.season < 0 || config.weights.companions < 0) {
    throw Error(Errc::ConfigError, "ranking weights must be non-negative");
  }
}

std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

bool awaiting_reply(const Session& session) {
  return !session.transcript.empty() && session.transcript.back().speaker == Speaker::Customer;
}

std::optional<TravelPlan> current_plan(const Session& session, const PipelineDeps& deps) {
  if (phase_rank(session.phase) < phase_rank(Phase::Recommendation) || !deps.spots || deps.spots->empty()) {
    return std::nullopt;
  }
  return compose_plan(*deps.spots, session.slots, deps.config->plan_size, deps.config->weights);
}

namespace {

Provenance provenance_for(ResponseSource source) {
  switch (source) {
    case ResponseSource::Remote: return Provenance::Backend;
    case ResponseSource::Mock: return Provenance::MockBackend;
    case ResponseSource::Fallback: return Provenance::Fallback;
  }
  return Provenance::Fallback;
}

Turn system_turn(const Session& session, std::string text, Phase phase, std::int64_t timestamp_ms,
                 std::int64_t latency_ms, Provenance provenance) {
  Turn t;
  t.index = session.transcript.size();
  t.speaker = Speaker::System;
  t.text = std::move(text);
  t.phase = phase;
  t.timestamp_ms = timestamp_ms;
  t.latency_ms = latency_ms;
  t.provenance = provenance;
  return t;
}

// Generates the reply for the session's current phase.
BackendResponse generate(const Session& session, const PipelineDeps& deps, TurnBudget& budget) {
  const auto& cfg = *deps.config;
  auto plan = current_plan(session, deps);
  RenderOptions options;
  options.max_history_turns = cfg.backend.max_history_turns;
  options.goal_instruction = cfg.scenario.goal(session.phase).instruction;
  options.fallback_text = fallback_utterance(cfg.templates, session.phase, session.slots, plan);
  options.plan = std::move(plan);
  const auto prompt = render_prompt(session, cfg.templates.at(session.phase), options);
  if (deps.on_prompt) deps.on_prompt(prompt);
  auto response =
      complete_with_deadline(prompt, cfg.backend, deps.backend, std::chrono::milliseconds(budget.remaining_ms()));
  budget.spend(response.latency_ms);
  return response;
}

}  // namespace

TurnResult open_session(Session session, const PipelineDeps& deps) {
  if (!session.transcript.empty() || session.phase != Phase::Greeting) {
    throw Error(Errc::NotReady, "session " + session.id + " has already been opened");
  }
  TurnBudget budget(deps.config->backend.deadline_ms);
  const auto now = deps.clock();
  auto response = generate(session, deps, budget);
  auto turn = system_turn(session, std::move(response.text), session.phase, now + budget.spent_ms(),
                          budget.spent_ms(), provenance_for(response.source));
  session = append_turn(std::move(session), turn);
  return {std::move(session), std::move(turn)};
}

Session accept_customer_turn(Session session, std::string_view user_text, const PipelineDeps& deps,
                             TurnBudget& budget) {
  const auto& cfg = *deps.config;
  if (session.status != SessionStatus::Active) {
    throw Error(Errc::SessionClosed, "session " + session.id + " is " + std::string(status_name(session.status)));
  }
  if (awaiting_reply(session)) throw Error(Errc::NotReady, "previous customer turn has no reply yet");

  const auto& transcript = session.transcript;
  const std::size_t k = std::min(cfg.detector.context_turns, transcript.size());
  const std::span<const Turn> context(transcript.data() + (transcript.size() - k), k);

  const auto heuristic = detect_breakdown_heuristic(context, user_text, cfg.detector, cfg.lexicons);
  std::optional<BreakdownVerdict> prompted;
  if (cfg.detector.use_prompted) {
    auto outcome = judge_breakdown(context, user_text, deps.backend, cfg.backend, cfg.judge, session.phase,
                                   session.rng_seed, std::chrono::milliseconds(budget.remaining_ms()));
    budget.spend(outcome.latency_ms);
    prompted = std::move(outcome.verdict);
  }

  Turn turn;
  turn.index = transcript.size();
  turn.speaker = Speaker::Customer;
  turn.text = std::string(user_text);
  turn.phase = session.phase;
  turn.timestamp_ms = deps.clock();
  turn.breakdown = combine_verdicts(heuristic, prompted);
  turn.provenance = Provenance::Scripted;
  const bool recovering = turn.breakdown->is_breakdown && session.consecutive_recoveries < cfg.scenario.recovery_cap;
  session = append_turn(std::move(session), std::move(turn));

  if (!recovering) {
    auto& appended = session.transcript.back();
    const auto extractions =
        extract_slots(appended.text, appended.phase, session.slots, cfg.lexicons, appended.index);
    for (const auto& e : extractions) {
      session = fill_slot(std::move(session), e.name, e.value);
      session.transcript.back().slot_updates.emplace_back(e.name, e.value);
    }
  }
  return session;
}

TurnResult respond(Session session, const PipelineDeps& deps, TurnBudget& budget) {
  const auto& cfg = *deps.config;
  if (session.status != SessionStatus::Active) {
    throw Error(Errc::SessionClosed, "session " + session.id + " is " + std::string(status_name(session.status)));
  }
  if (!awaiting_reply(session)) throw Error(Errc::NotReady, "no customer turn to respond to");

  const Turn& customer = session.transcript.back();
  const bool flagged = customer.breakdown && customer.breakdown->is_breakdown;
  const auto started = customer.timestamp_ms;

  if (flagged && session.consecutive_recoveries < cfg.scenario.recovery_cap) {
    auto turn = system_turn(session, std::string(recovery_utterance()), session.phase, started + budget.spent_ms(),
                            budget.spent_ms(), Provenance::Recovery);
    session = append_turn(std::move(session), turn);
    return {std::move(session), std::move(turn)};
  }

  const auto decision = phase_complete(session, cfg.scenario);
  if (decision.advance && *next_phase(session.phase) == Phase::Done) {
    auto turn = system_turn(session, cfg.templates.farewell, Phase::Done, started + budget.spent_ms(),
                            budget.spent_ms(), Provenance::Scripted);
    session = append_turn(std::move(session), turn);
    session = advance_phase(std::move(session), cfg.scenario);
    return {std::move(session), std::move(turn)};
  }

  std::vector<SlotUpdate> updates;
  if (decision.advance) {
    const SlotMap before = session.slots;
    session = advance_phase(std::move(session), cfg.scenario);
    for (const auto& [name, value] : session.slots) {
      if (before.count(name) == 0) updates.emplace_back(name, value);
    }
  }

  // Past the recovery cap a flagged turn gets the fixed clarifying reply
  // instead of another generation attempt.
  BackendResponse response;
  if (flagged) {
    response.text = fallback_utterance(cfg.templates, session.phase, session.slots, current_plan(session, deps));
    response.source = ResponseSource::Fallback;
  } else {
    response = generate(session, deps, budget);
  }
  auto turn = system_turn(session, std::move(response.text), session.phase, started + budget.spent_ms(),
                          budget.spent_ms(), provenance_for(response.source));
  turn.slot_updates = std::move(updates);
  session = append_turn(std::move(session), turn);
  return {std::move(session), std::move(turn)};
}

TurnResult run_turn(Session session, std::string_view user_text, const PipelineDeps& deps) {
  TurnBudget budget(deps.config->backend.deadline_ms);
  session = accept_customer_turn(std::move(session), user_text, deps, budget);
  return respond(std::move(session), deps, budget);
}

Session apply_recorded_turn(Session session, const Turn& turn, const ScenarioConfig& scenario) {
  if (turn.speaker == Speaker::Customer) {
    if (turn.phase != session.phase) throw Error(Errc::InvalidTurn, "customer turn phase does not match session");
    session = append_turn(std::move(session), turn);
    for (const auto& [name, value] : turn.slot_updates) session = fill_slot(std::move(session), name, value);
    return session;
  }

  for (const auto& [name, value] : turn.slot_updates) session = fill_slot(std::move(session), name, value);
  if (turn.phase == session.phase) return append_turn(std::move(session), turn);
  if (next_phase(session.phase) != turn.phase) {
    throw Error(Errc::InvalidTurn, "system turn skips from " + std::string(phase_name(session.phase)) + " to " +
                                       std::string(phase_name(turn.phase)));
  }
  if (turn.phase == Phase::Done) {
    session = append_turn(std::move(session), turn);
    return advance_phase(std::move(session), scenario);
  }
  session = advance_phase(std::move(session), scenario);
  return append_turn(std::move(session), turn);
}

}  // namespace travel
