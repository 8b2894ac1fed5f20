#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "travel/domain.hpp"
#include "travel/recommendation.hpp"

namespace travel {

// ---------------------------------------------------------------------------
// Prompt templates

// A directive may reference only these placeholders.
inline constexpr std::array<std::string_view, 5> kTemplatePlaceholders = {"customer_name", "slots", "history",
                                                                          "spots", "plan"};

struct PromptTemplate {
  Phase phase = Phase::Greeting;
  std::string system_directive;
  std::string style_constraints;
  std::string fallback;  // fixed reply when the backend misses its deadline
};

struct TemplateSet {
  std::map<Phase, PromptTemplate> by_phase;
  // The question phase re-asks whatever item is still missing.
  std::map<SlotName, std::string> question_fallbacks;
  std::string question_fallback_complete;
  // Scripted reply appended when the dialogue reaches Done.
  std::string farewell;

  const PromptTemplate& at(Phase phase) const;
};

TemplateSet default_templates();

// Throws ConfigError when a template is missing, empty, or references an
// unknown placeholder.
void validate_templates(const TemplateSet& templates);

// ---------------------------------------------------------------------------
// Rendered prompts and responses

enum class Role { System, User, Assistant };
std::string_view role_name(Role r);  // OpenAI wire names

struct ChatMessage {
  Role role = Role::System;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class PromptKind { Dialogue, BreakdownJudge };

struct RenderedPrompt {
  std::vector<ChatMessage> messages;
  Phase phase = Phase::Greeting;
  PromptKind kind = PromptKind::Dialogue;

  // Structured copy of what went into the text. The mock backend keys on
  // these instead of parsing prose.
  std::optional<std::string> customer_name;
  std::set<SlotName> filled_slots;
  std::optional<SlotName> pending_item;
  std::optional<TravelPlan> plan;
  std::size_t phase_turn = 0;  // system turns already spent in this phase
  std::uint64_t seed = 0;
  std::string candidate;       // judge prompts: the utterance under test
  std::string fallback_text;   // used when the backend call fails
};

enum class ResponseSource { Remote, Mock, Fallback };
std::string_view source_name(ResponseSource s);

struct BackendResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  ResponseSource source = ResponseSource::Fallback;
};

inline constexpr std::int64_t kDeadlineCeilingMs = 60000;

struct BackendConfig {
  std::string endpoint_url;
  std::string model_name = "gpt-3.5-turbo";
  std::string api_key;
  std::int64_t deadline_ms = 8000;
  std::size_t max_history_turns = 12;
  double temperature = 0.7;
  std::size_t max_utterance_chars = 400;
};

// Throws ConfigError unless 0 < deadline_ms < 60000 and the rest is sane.
void validate_backend_config(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Backends

struct BackendReply {
  std::string text;
  // Backends that do not actually wait (the mock) report a modeled latency
  // so that simulated runs are reproducible.
  std::optional<std::int64_t> modeled_latency_ms;
};

// A completion service. complete() may block and may throw; callers go
// through complete_with_deadline, which never waits past the deadline.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual BackendReply complete(const RenderedPrompt& prompt) = 0;
  virtual ResponseSource source() const = 0;
  // True for pure, non-blocking backends that can be called on the caller's
  // thread without a watchdog.
  virtual bool runs_inline() const { return false; }
};

BackendResponse mock_complete(const RenderedPrompt& prompt, std::uint64_t seed);

class MockBackend final : public CompletionBackend {
 public:
  BackendReply complete(const RenderedPrompt& prompt) override;
  ResponseSource source() const override { return ResponseSource::Mock; }
  bool runs_inline() const override { return true; }
};

// ---------------------------------------------------------------------------
// Operations

struct RenderOptions {
  std::optional<TravelPlan> plan;
  std::size_t max_history_turns = 12;
  std::string goal_instruction;
  std::string fallback_text;
};

// Throws PhaseMismatch when template.phase != session.phase.
RenderedPrompt render_prompt(const Session& session, const PromptTemplate& tmpl, const RenderOptions& options);

// "season: autumn; purpose: (unknown); companions: (unknown)"
std::string render_slots(const SlotMap& slots);

// First question item without a value, in asking order.
std::optional<SlotName> pending_question_item(const SlotMap& slots);

std::string fallback_utterance(const TemplateSet& templates, Phase phase, const SlotMap& slots,
                               const std::optional<TravelPlan>& plan);

inline constexpr std::size_t kDefaultMaxUtteranceChars = 400;

// Trims, unwraps quotes, drops a leading speaker label and truncates at a
// sentence boundary. Throws EmptyAfterCleaning.
std::string postprocess(std::string_view raw, std::size_t max_chars = kDefaultMaxUtteranceChars);

// Runs the backend under a watchdog bounded by min(config.deadline_ms, budget).
// A call still running at the deadline is abandoned and its result dropped.
BackendResponse complete_with_deadline(const RenderedPrompt& prompt, const BackendConfig& config,
                                       const std::shared_ptr<CompletionBackend>& backend,
                                       std::optional<std::chrono::milliseconds> budget = std::nullopt);

}  // namespace travel
