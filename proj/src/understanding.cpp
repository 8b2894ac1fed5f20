#include "travel/understanding.hpp"

#include <algorithm>
#include <cctype>

#include "travel/error.hpp"
#include "travel/text.hpp"

namespace travel {

Lexicons default_lexicons() {
  Lexicons lx;
  lx.seasons = {
      {"spring", {"spring", "springtime", "March", "april", "May"}},
      {"summer", {"summer", "summertime", "june", "july", "august"}},
      {"autumn", {"autumn", "fall", "september", "october", "november"}},
      {"winter", {"winter", "wintertime", "december", "january", "february"}},
  };
  lx.companions = {
      {"family", {"family", "my kids", "my children", "my parents", "my son", "my daughter", "my mother",
                  "my father", "my mom", "my dad"}},
      {"partner", {"partner", "my wife", "my husband", "girlfriend", "boyfriend", "spouse", "fiance", "fiancee"}},
      {"friends", {"friends", "a friend", "my friend", "buddies"}},
      {"alone", {"alone", "by myself", "on my own", "solo", "just me"}},
      {"colleagues", {"colleagues", "coworkers", "co-workers", "my team", "business trip"}},
  };
  lx.purposes = {
      {"nature", {"nature", "garden", "gardens", "hiking", "mountains", "mountain", "bamboo", "scenery", "forest",
                  "river"}},
      {"history", {"history", "historical", "temple", "temples", "shrine", "shrines", "castle", "culture",
                   "cultural", "traditional", "heritage"}},
      {"food", {"food", "eating", "cuisine", "restaurants", "restaurant", "gourmet", "sweets", "matcha",
                "street food"}},
      {"relaxation", {"relax", "relaxing", "relaxation", "hot spring", "hot springs", "onsen", "unwind",
                      "peaceful"}},
      {"shopping", {"shopping", "shop", "souvenirs", "souvenir", "market", "markets", "crafts"}},
  };
  lx.confusion_markers = {"what",      "huh",         "eh",         "pardon",       "sorry",
                          "excuse me", "come again",  "what do you mean", "i don't understand",
                          "i do not understand", "hm", "hmm"};
  lx.name_intros = {"my name is", "my name's", "name is"};
  lx.name_intros_capitalized = {"i'm", "i am", "call me", "this is", "it's"};
  lx.name_stopwords = {"a",        "an",      "the",      "traveling", "travelling", "going",   "looking",
                       "here",     "fine",    "good",     "great",     "well",       "so",      "very",
                       "just",     "not",     "interested", "planning", "from",      "thinking", "excited",
                       "happy",    "sorry",   "glad",     "with",      "in",         "on",      "at",
                       "hello",    "hi",      "hey",      "yes",       "no",         "thanks",  "thank",
                       "sure",     "ok",      "okay",     "hmm",       "um",         "uh",      "morning",
                       "afternoon", "evening", "nice",    "pleased",   "doing",      "really",  "also",
                       "and",      "but",     "to",       "for",       "of",         "what",    "huh",
                       "kyoto",    "japan",   "fine",     "pardon",    "please",     "bye",     "goodbye"};
  return lx;
}

namespace {

struct Token {
  std::string lower;  // lowercased, apostrophes normalized
  std::size_t begin;
  std::size_t end;
  bool capitalized;
  bool sentence_start;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t prev_end = 0;
  for (auto& w : text::words(s)) {
    bool sentence_start = out.empty();
    if (!sentence_start) {
      auto gap = s.substr(prev_end, w.begin - prev_end);
      sentence_start = gap.find_first_of(".!?") != std::string_view::npos;
    }
    out.push_back(Token{text::normalize_apostrophes(w.lower), w.begin, w.end, w.capitalized, sentence_start});
    prev_end = w.end;
  }
  return out;
}

struct CompiledTerm {
  std::vector<std::string> words;
  bool case_sensitive;
  SlotName slot;
  std::string normalized;
};

std::vector<std::string> term_words(std::string_view term) {
  std::vector<std::string> out;
  for (auto& w : text::words(text::normalize_apostrophes(term))) out.push_back(w.lower);
  return out;
}

void compile(std::vector<CompiledTerm>& out, const std::vector<LexiconEntry>& entries, SlotName slot) {
  for (const auto& e : entries) {
    for (const auto& t : e.terms) {
      auto words = term_words(t);
      if (words.empty()) continue;
      const bool cs = std::isupper(static_cast<unsigned char>(t.front())) != 0;
      out.push_back(CompiledTerm{std::move(words), cs, slot, e.normalized});
    }
  }
}

bool matches_at(const std::vector<Token>& tokens, std::size_t pos, const CompiledTerm& term) {
  if (pos + term.words.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < term.words.size(); ++k) {
    if (tokens[pos + k].lower != term.words[k]) return false;
  }
  if (term.case_sensitive && (!tokens[pos].capitalized || tokens[pos].sentence_start)) return false;
  return true;
}

bool phrase_at(const std::vector<Token>& tokens, std::size_t pos, const std::vector<std::string>& words) {
  if (words.empty() || pos + words.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (tokens[pos + k].lower != words[k]) return false;
  }
  return true;
}

bool is_name_word(const Token& t, const Lexicons& lx) {
  if (std::find(lx.name_stopwords.begin(), lx.name_stopwords.end(), t.lower) != lx.name_stopwords.end()) {
    return false;
  }
  return std::all_of(t.lower.begin(), t.lower.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalpha(u) != 0 || c == '-' || u >= 0x80;
  });
}

std::string capitalize_words(std::string_view s) {
  std::string out(s);
  bool at_start = true;
  for (auto& c : out) {
    if (at_start && std::isalpha(static_cast<unsigned char>(c)) != 0) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    at_start = c == ' ' || c == '-';
  }
  return out;
}

std::optional<SlotExtraction> extract_name(std::string_view source, const std::vector<Token>& tokens,
                                           const Lexicons& lx, std::size_t turn_index) {
  auto build = [&](std::size_t first, bool require_capital) -> std::optional<SlotExtraction> {
    if (first >= tokens.size()) return std::nullopt;
    const auto& t0 = tokens[first];
    if (!is_name_word(t0, lx) || (require_capital && !t0.capitalized)) return std::nullopt;
    std::size_t last = first;
    if (first + 1 < tokens.size()) {
      const auto& t1 = tokens[first + 1];
      if (t1.capitalized && is_name_word(t1, lx) && source.substr(t0.end, t1.begin - t0.end) == " ") last = first + 1;
    }
    std::string evidence(source.substr(t0.begin, tokens[last].end - t0.begin));
    return SlotExtraction{SlotName::CustomerName,
                          SlotValue{capitalize_words(evidence), evidence, kRuleConfidence, turn_index}};
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& intro : lx.name_intros) {
      auto words = term_words(intro);
      if (phrase_at(tokens, i, words)) {
        if (auto e = build(i + words.size(), false)) return e;
      }
    }
    for (const auto& intro : lx.name_intros_capitalized) {
      auto words = term_words(intro);
      if (phrase_at(tokens, i, words)) {
        if (auto e = build(i + words.size(), true)) return e;
      }
    }
  }
  // A bare answer such as "Mei." or "Ken Sato".
  if (!tokens.empty() && tokens.size() <= 2 &&
      std::all_of(tokens.begin(), tokens.end(), [&](const Token& t) { return t.capitalized && is_name_word(t, lx); })) {
    return build(0, true);
  }
  return std::nullopt;
}

}  // namespace

std::vector<SlotExtraction> extract_slots(std::string_view text, Phase phase, const SlotMap& existing,
                                          const Lexicons& lexicons, std::size_t turn_index) {
  std::vector<SlotExtraction> found;
  const auto tokens = tokenize(text);
  if (tokens.empty()) return found;

  if (phase == Phase::Greeting) {
    if (auto name = extract_name(text, tokens, lexicons, turn_index)) found.push_back(std::move(*name));
  }

  std::vector<CompiledTerm> terms;
  compile(terms, lexicons.seasons, SlotName::Season);
  compile(terms, lexicons.companions, SlotName::Companions);
  compile(terms, lexicons.purposes, SlotName::TravelPurpose);

  // Left-to-right, longest term first, so "hot spring" is consumed before
  // "spring" could be read as a season. The first hit per slot wins.
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    const CompiledTerm* best = nullptr;
    for (const auto& term : terms) {
      if ((best == nullptr || term.words.size() > best->words.size()) && matches_at(tokens, pos, term)) best = &term;
    }
    if (best == nullptr) {
      ++pos;
      continue;
    }
    const bool already = std::any_of(found.begin(), found.end(), [&](const SlotExtraction& e) {
      return e.name == best->slot;
    });
    if (!already) {
      const auto& first = tokens[pos];
      const auto& last = tokens[pos + best->words.size() - 1];
      const bool exact = best->words.size() == tokens.size();
      found.push_back(SlotExtraction{
          best->slot, SlotValue{best->normalized, std::string(text.substr(first.begin, last.end - first.begin)),
                                exact ? kExactMatchConfidence : kRuleConfidence, turn_index}});
    }
    pos += best->words.size();
  }

  std::erase_if(found, [&](const SlotExtraction& e) {
    auto it = existing.find(e.name);
    return it != existing.end() && it->second.confidence > e.value.confidence;
  });
  std::stable_sort(found.begin(), found.end(),
                   [](const SlotExtraction& a, const SlotExtraction& b) { return a.name < b.name; });
  return found;
}

// ---------------------------------------------------------------------------

void validate_detector_config(const DetectorConfig& config) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(config.threshold) || !unit(config.max_repetition_overlap) || !unit(config.min_alpha_ratio)) {
    throw Error(Errc::ConfigError, "detector thresholds must lie in [0, 1]");
  }
}

double repetition_overlap(std::string_view a, std::string_view b) {
  const auto na = text::to_lower(text::collapse_whitespace(a));
  const auto nb = text::to_lower(text::collapse_whitespace(b));
  const auto longest = std::max(na.size(), nb.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(text::longest_common_substring(na, nb)) / static_cast<double>(longest);
}

namespace {

bool only_confusion_markers(std::string_view candidate, const Lexicons& lx) {
  const auto tokens = tokenize(candidate);
  if (tokens.empty()) return false;
  std::vector<std::vector<std::string>> markers;
  for (const auto& m : lx.confusion_markers) markers.push_back(term_words(m));
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    std::size_t advance = 0;
    for (const auto& m : markers) {
      if (m.size() > advance && phrase_at(tokens, pos, m)) advance = m.size();
    }
    if (advance == 0) return false;
    pos += advance;
  }
  return true;
}

const Turn* previous_customer_turn(std::span<const Turn> context) {
  for (auto it = context.rbegin(); it != context.rend(); ++it) {
    if (it->speaker == Speaker::Customer) return &*it;
  }
  return nullptr;
}

BreakdownVerdict heuristic_verdict(std::string_view reason, const DetectorConfig& config) {
  BreakdownVerdict v;
  v.detector_id = DetectorId::Heuristic;
  v.score = reason.empty() ? 0.0 : 1.0;
  v.is_breakdown = !reason.empty() && v.score >= config.threshold;
  v.reason = reason.empty() ? "none" : std::string(reason);
  return v;
}

}  // namespace

BreakdownVerdict detect_breakdown_heuristic(std::span<const Turn> context, std::string_view candidate,
                                            const DetectorConfig& config, const Lexicons& lexicons) {
  if (text::is_blank(candidate)) return heuristic_verdict("empty", config);

  const auto counts = text::count_chars(candidate);
  const double alpha_ratio = static_cast<double>(counts.alphabetic) / static_cast<double>(counts.non_whitespace);
  if (alpha_ratio < config.min_alpha_ratio) return heuristic_verdict("low_alpha_ratio", config);

  if (const Turn* prev = previous_customer_turn(context);
      prev != nullptr && repetition_overlap(prev->text, candidate) > config.max_repetition_overlap) {
    return heuristic_verdict("repetition", config);
  }

  if (only_confusion_markers(candidate, lexicons)) return heuristic_verdict("confusion_marker", config);
  return heuristic_verdict("", config);
}

// ---------------------------------------------------------------------------

JudgeTemplate default_judge_template() {
  return JudgeTemplate{
      "You monitor a spoken conversation between a travel agent and a customer. Decide whether the "
      "conversation has broken down at the customer's latest utterance, meaning it cannot be continued "
      "naturally (for example it is unintelligible, off the rails, or signals the customer was not "
      "understood). Answer with exactly one word: BREAKDOWN or OK.",
      "Conversation so far:\n{context}\n\nLatest customer utterance: {candidate}\n\nAnswer BREAKDOWN or OK."};
}

RenderedPrompt render_judge_prompt(std::span<const Turn> context, std::string_view candidate,
                                   const JudgeTemplate& tmpl, Phase phase, std::uint64_t seed) {
  std::string ctx;
  for (const auto& t : context) {
    if (!ctx.empty()) ctx += "\n";
    ctx += (t.speaker == Speaker::Customer ? "Customer: " : "Agent: ") + t.text;
  }
  if (ctx.empty()) ctx = "(start of conversation)";
  auto query = text::replace_all(tmpl.query, "{context}", ctx);
  query = text::replace_all(query, "{candidate}", std::string(candidate));

  RenderedPrompt p;
  p.kind = PromptKind::BreakdownJudge;
  p.phase = phase;
  p.seed = seed;
  p.candidate = std::string(candidate);
  p.messages = {{Role::System, tmpl.instructions}, {Role::User, std::move(query)}};
  return p;
}

std::optional<bool> parse_judge_reply(std::string_view reply) {
  std::string s(text::trim(reply));
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back())) != 0) s.pop_back();
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.front())) != 0) s.erase(s.begin());
  s = text::to_lower(text::trim(s));
  if (s == "breakdown") return true;
  if (s == "ok") return false;
  return std::nullopt;
}

JudgeOutcome judge_breakdown(std::span<const Turn> context, std::string_view candidate,
                             const std::shared_ptr<CompletionBackend>& backend, const BackendConfig& config,
                             const JudgeTemplate& tmpl, Phase phase, std::uint64_t seed,
                             std::optional<std::chrono::milliseconds> budget) {
  const auto prompt = render_judge_prompt(context, candidate, tmpl, phase, seed);
  const auto response = complete_with_deadline(prompt, config, backend, budget);

  JudgeOutcome out;
  out.latency_ms = response.latency_ms;
  out.verdict.detector_id = DetectorId::Prompted;
  std::optional<bool> parsed;
  if (response.source != ResponseSource::Fallback) parsed = parse_judge_reply(response.text);
  if (!parsed) {
    out.verdict.reason = "judge_unavailable";
  } else {
    out.verdict.is_breakdown = *parsed;
    out.verdict.score = *parsed ? 1.0 : 0.0;
    out.verdict.reason = *parsed ? "judge_breakdown" : "judge_ok";
  }
  return out;
}

BreakdownVerdict detect_breakdown_prompted(std::span<const Turn> context, std::string_view candidate,
                                           const std::shared_ptr<CompletionBackend>& backend,
                                           const BackendConfig& config, const JudgeTemplate& tmpl) {
  return judge_breakdown(context, candidate, backend, config, tmpl, Phase::Greeting, 0).verdict;
}

BreakdownVerdict combine_verdicts(const BreakdownVerdict& heuristic, const std::optional<BreakdownVerdict>& prompted) {
  BreakdownVerdict out;
  out.detector_id = DetectorId::Combined;
  out.is_breakdown = heuristic.is_breakdown || (prompted && prompted->is_breakdown);
  out.score = std::max(heuristic.score, prompted ? prompted->score : 0.0);
  std::vector<std::string> reasons;
  if (heuristic.is_breakdown) reasons.push_back(heuristic.reason);
  if (prompted && prompted->is_breakdown) reasons.push_back(prompted->reason);
  out.reason = reasons.empty() ? "none" : text::join(reasons, "+");
  return out;
}

std::string_view recovery_utterance() {
  return "I'm sorry. Did I say something wrong? Or I may not have been able to catch our conversation. "
         "Could you please tell me again?";
}

}  // namespace travel
