#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "travel/domain.hpp"
#include "travel/nlg.hpp"

namespace travel {

// One normalized value and the surface phrases that map to it. A term written
// with a leading capital ("May") only matches a capitalized token that does
// not start a sentence; lowercase terms match case-insensitively.
struct LexiconEntry {
  std::string normalized;
  std::vector<std::string> terms;
};

struct Lexicons {
  std::vector<LexiconEntry> seasons;
  std::vector<LexiconEntry> companions;
  std::vector<LexiconEntry> purposes;
  std::vector<std::string> confusion_markers;
  // Introductions after which the next word is taken as a name regardless of case.
  std::vector<std::string> name_intros;
  // Introductions that only count when the following word is capitalized.
  std::vector<std::string> name_intros_capitalized;
  std::vector<std::string> name_stopwords;
};

Lexicons default_lexicons();

inline constexpr double kRuleConfidence = 0.8;
inline constexpr double kExactMatchConfidence = 1.0;

struct SlotExtraction {
  SlotName name;
  SlotValue value;
  friend bool operator==(const SlotExtraction&, const SlotExtraction&) = default;
};

// Rule-based extraction. CustomerName is only looked for during Greeting.
// Extractions that would undercut a more confident existing value are dropped.
std::vector<SlotExtraction> extract_slots(std::string_view text, Phase phase, const SlotMap& existing,
                                          const Lexicons& lexicons, std::size_t turn_index = 0);

struct DetectorConfig {
  double threshold = 0.5;
  double max_repetition_overlap = 0.8;
  double min_alpha_ratio = 0.3;
  bool use_prompted = true;
  std::size_t context_turns = 4;
};

void validate_detector_config(const DetectorConfig& config);

// Longest-common-substring length over the longer of the two lowercased,
// whitespace-collapsed strings.
double repetition_overlap(std::string_view a, std::string_view b);

BreakdownVerdict detect_breakdown_heuristic(std::span<const Turn> context, std::string_view candidate,
                                            const DetectorConfig& config, const Lexicons& lexicons);

struct JudgeTemplate {
  std::string instructions;
  std::string query;  // placeholders: {context}, {candidate}
};

JudgeTemplate default_judge_template();

RenderedPrompt render_judge_prompt(std::span<const Turn> context, std::string_view candidate,
                                   const JudgeTemplate& tmpl, Phase phase, std::uint64_t seed);

struct JudgeOutcome {
  BreakdownVerdict verdict;
  std::int64_t latency_ms = 0;
};

// Fails open: an unparseable or late reply is reported as no breakdown with
// reason "judge_unavailable".
JudgeOutcome judge_breakdown(std::span<const Turn> context, std::string_view candidate,
                             const std::shared_ptr<CompletionBackend>& backend, const BackendConfig& config,
                             const JudgeTemplate& tmpl, Phase phase, std::uint64_t seed,
                             std::optional<std::chrono::milliseconds> budget = std::nullopt);

BreakdownVerdict detect_breakdown_prompted(std::span<const Turn> context, std::string_view candidate,
                                           const std::shared_ptr<CompletionBackend>& backend,
                                           const BackendConfig& config,
                                           const JudgeTemplate& tmpl = default_judge_template());

// Parses a judge reply: exactly BREAKDOWN or OK, case-insensitive, ignoring
// surrounding whitespace and punctuation.
std::optional<bool> parse_judge_reply(std::string_view reply);

BreakdownVerdict combine_verdicts(const BreakdownVerdict& heuristic, const std::optional<BreakdownVerdict>& prompted);

std::string_view recovery_utterance();

}  // namespace travel
