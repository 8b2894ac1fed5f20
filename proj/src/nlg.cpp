#include "travel/nlg.hpp"

#include <algorithm>
#include <array>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "travel/error.hpp"
#include "travel/text.hpp"

namespace travel {

const PromptTemplate& TemplateSet::at(Phase phase) const {
  auto it = by_phase.find(phase);
  if (it == by_phase.end()) throw Error(Errc::ConfigError, "no template for phase " + std::string(phase_name(phase)));
  return it->second;
}

TemplateSet default_templates() {
  const std::string style =
      "You are a polite, cheerful travel agent at a counter, helping a customer plan a trip to Kyoto. "
      "Reply with at most three short spoken sentences. No lists, no speaker labels, no emoji.";
  TemplateSet t;
  t.by_phase[Phase::Greeting] = {
      Phase::Greeting,
      "You are opening the conversation with a customer who just arrived. Welcome them and find out what "
      "their name is.",
      style, "Welcome to our travel agency! May I have your name, please?"};
  t.by_phase[Phase::IceBreak] = {
      Phase::IceBreak,
      "The customer's name is {customer_name}. Chat casually about Kyoto, the place they are going to visit, "
      "so they feel relaxed. Do not ask about travel plans yet.",
      style, "Kyoto is lovely in every season. Have you ever been there before?"};
  t.by_phase[Phase::Question] = {
      Phase::Question,
      "The customer's name is {customer_name}. You need three pieces of information before you can plan "
      "the trip: the purpose of the trip, who is coming along, and the season. What is known so far: {slots}. "
      "Ask about exactly one item that is still unknown.",
      style, "Could you tell me a little more about your trip?"};
  t.by_phase[Phase::Recommendation] = {
      Phase::Recommendation,
      "The customer's name is {customer_name}. What you learned: {slots}. Recommend the following spots, "
      "in this order, and mention no other places:\n{plan}",
      style, "Based on what you told me, I recommend visiting {spots}."};
  t.by_phase[Phase::Closing] = {
      Phase::Closing,
      "The customer's name is {customer_name}. You recommended {spots}. Thank them and bring the conversation "
      "to a friendly close.",
      style, "Thank you for talking with me today. I hope you enjoy your trip to Kyoto!"};
  t.question_fallbacks[SlotName::TravelPurpose] = "What would you most like to do in Kyoto on this trip?";
  t.question_fallbacks[SlotName::Companions] = "Who will you be traveling with?";
  t.question_fallbacks[SlotName::Season] = "Which season are you planning to travel in?";
  t.question_fallback_complete = "Is there anything else you would like me to know about your trip?";
  t.farewell = "Goodbye, and have a wonderful trip!";
  return t;
}

namespace {

// Every "{name}" token in s.
std::vector<std::string> placeholders_in(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = s.find('{', pos)) != std::string_view::npos) {
    auto close = s.find('}', pos + 1);
    if (close == std::string_view::npos) break;
    out.emplace_back(s.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

}  // namespace

void validate_templates(const TemplateSet& templates) {
  for (Phase p : kScenarioPhases) {
    const auto& t = templates.at(p);
    if (t.phase != p) throw Error(Errc::ConfigError, "template keyed under the wrong phase");
    if (text::is_blank(t.system_directive)) {
      throw Error(Errc::ConfigError, "empty directive for " + std::string(phase_name(p)));
    }
    for (const auto& name : placeholders_in(t.system_directive)) {
      if (std::find(kTemplatePlaceholders.begin(), kTemplatePlaceholders.end(), name) ==
          kTemplatePlaceholders.end()) {
        throw Error(Errc::ConfigError, "unknown placeholder {" + name + "} in " + std::string(phase_name(p)));
      }
    }
    if (p != Phase::Question && text::is_blank(t.fallback)) {
      throw Error(Errc::ConfigError, "empty fallback for " + std::string(phase_name(p)));
    }
  }
  for (SlotName s : kQuestionSlots) {
    auto it = templates.question_fallbacks.find(s);
    if (it == templates.question_fallbacks.end() || text::is_blank(it->second)) {
      throw Error(Errc::ConfigError, "missing question fallback for " + std::string(slot_key(s)));
    }
  }
  if (text::is_blank(templates.question_fallback_complete) || text::is_blank(templates.farewell)) {
    throw Error(Errc::ConfigError, "empty question/farewell fallback");
  }
}

std::string_view role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "system";
}

std::string_view source_name(ResponseSource s) {
  switch (s) {
    case ResponseSource::Remote: return "Remote";
    case ResponseSource::Mock: return "Mock";
    case ResponseSource::Fallback: return "Fallback";
  }
  return "";
}

void validate_backend_config(const BackendConfig& config) {
  if (config.deadline_ms <= 0 || config.deadline_ms >= kDeadlineCeilingMs) {
    throw Error(Errc::ConfigError, "deadline_ms must be in (0, 60000), got " + std::to_string(config.deadline_ms));
  }
  if (config.max_history_turns == 0) throw Error(Errc::ConfigError, "max_history_turns must be positive");
  if (config.temperature < 0.0) throw Error(Errc::ConfigError, "temperature must be >= 0");
  if (config.max_utterance_chars == 0) throw Error(Errc::ConfigError, "max_utterance_chars must be positive");
}

// ---------------------------------------------------------------------------

std::string render_slots(const SlotMap& slots) {
  std::vector<std::string> parts;
  for (SlotName s : {SlotName::Season, SlotName::TravelPurpose, SlotName::Companions}) {
    auto it = slots.find(s);
    parts.push_back(std::string(slot_label(s)) + ": " +
                    (it == slots.end() || it->second.normalized.empty() ? std::string("(unknown)")
                                                                        : it->second.normalized));
  }
  return text::join(parts, "; ");
}

std::optional<SlotName> pending_question_item(const SlotMap& slots) {
  for (SlotName s : kQuestionSlots) {
    auto it = slots.find(s);
    if (it == slots.end() || it->second.normalized.empty()) return s;
  }
  return std::nullopt;
}

std::string fallback_utterance(const TemplateSet& templates, Phase phase, const SlotMap& slots,
                               const std::optional<TravelPlan>& plan) {
  if (phase == Phase::Done) return templates.farewell;
  if (phase == Phase::Question) {
    auto pending = pending_question_item(slots);
    return pending ? templates.question_fallbacks.at(*pending) : templates.question_fallback_complete;
  }
  std::string spots = "(none)";
  if (plan && !plan->items.empty()) {
    auto names = plan->spot_names();
    if (names.size() == 1) {
      spots = names.front();
    } else {
      auto last = names.back();
      names.pop_back();
      spots = text::join(names, ", ") + " and " + last;
    }
  }
  return text::replace_all(templates.at(phase).fallback, "{spots}", spots);
}

RenderedPrompt render_prompt(const Session& session, const PromptTemplate& tmpl, const RenderOptions& options) {
  if (tmpl.phase != session.phase) {
    throw Error(Errc::PhaseMismatch, "template for " + std::string(phase_name(tmpl.phase)) + ", session in " +
                                         std::string(phase_name(session.phase)));
  }
  const auto& transcript = session.transcript;
  const std::size_t keep = std::min(options.max_history_turns, transcript.size());
  const auto history_begin = transcript.end() - static_cast<std::ptrdiff_t>(keep);

  std::string history_text;
  for (auto it = history_begin; it != transcript.end(); ++it) {
    if (!history_text.empty()) history_text += "\n";
    history_text += (it->speaker == Speaker::Customer ? "Customer: " : "Agent: ") + it->text;
  }

  RenderedPrompt prompt;
  prompt.phase = session.phase;
  prompt.kind = PromptKind::Dialogue;
  prompt.seed = session.rng_seed;
  prompt.plan = options.plan;
  prompt.phase_turn = system_turns_in_phase(session, session.phase);
  prompt.pending_item = pending_question_item(session.slots);
  prompt.fallback_text = options.fallback_text;
  for (SlotName s : kQuestionSlots) {
    if (const auto* v = find_slot(session, s); v != nullptr && !v->normalized.empty()) prompt.filled_slots.insert(s);
  }
  if (const auto* name = find_slot(session, SlotName::CustomerName); name != nullptr) {
    prompt.customer_name = name->normalized;
  }

  std::string spots = "(none)";
  std::string plan_block = "(none)";
  if (options.plan && !options.plan->items.empty()) {
    spots = text::join(options.plan->spot_names(), ", ");
    plan_block = plan_presentation_context(*options.plan);
  }

  std::string directive = tmpl.system_directive;
  directive = text::replace_all(directive, "{customer_name}", prompt.customer_name.value_or("(unknown)"));
  directive = text::replace_all(directive, "{slots}", render_slots(session.slots));
  directive = text::replace_all(directive, "{history}", history_text);
  directive = text::replace_all(directive, "{spots}", spots);
  directive = text::replace_all(directive, "{plan}", plan_block);

  std::string system = directive;
  if (!options.goal_instruction.empty()) system += "\n\nGoal for this phase: " + options.goal_instruction;
  if (!tmpl.style_constraints.empty()) system += "\n\n" + tmpl.style_constraints;
  prompt.messages.push_back({Role::System, std::move(system)});
  for (auto it = history_begin; it != transcript.end(); ++it) {
    prompt.messages.push_back({it->speaker == Speaker::Customer ? Role::User : Role::Assistant, it->text});
  }
  return prompt;
}

// ---------------------------------------------------------------------------
// Postprocessing

namespace {

constexpr std::array<std::string_view, 9> kSpeakerLabels = {"travel agent", "agent",     "assistant",
                                                            "system",       "robot",     "guide",
                                                            "ai",           "bot",       "clerk"};

struct QuotePair {
  std::string_view open;
  std::string_view close;
};
constexpr std::array<QuotePair, 5> kQuotes = {{{"\"", "\""},
                                               {"'", "'"},
                                               {"\xE2\x80\x9C", "\xE2\x80\x9D"},
                                               {"\xE2\x80\x98", "\xE2\x80\x99"},
                                               {"\xE3\x80\x8C", "\xE3\x80\x8D"}}};

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

std::string strip_label(std::string_view s) {
  const auto lower = text::to_lower(s.substr(0, 24));
  for (auto label : kSpeakerLabels) {
    if (starts_with(lower, label) && lower.size() > label.size() && lower[label.size()] == ':') {
      return std::string(s.substr(label.size() + 1));
    }
  }
  return std::string(s);
}

std::string unwrap_quotes(std::string_view s) {
  for (const auto& q : kQuotes) {
    if (s.size() >= q.open.size() + q.close.size() && starts_with(s, q.open) && ends_with(s, q.close)) {
      return std::string(s.substr(q.open.size(), s.size() - q.open.size() - q.close.size()));
    }
  }
  return std::string(s);
}

// Byte length of the first `n` code points.
std::size_t codepoint_prefix(std::string_view s, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (count == n) return i;
      ++count;
    }
  }
  return s.size();
}

std::string truncate_at_sentence(std::string_view s, std::size_t max_chars) {
  if (text::utf8_length(s) <= max_chars) return std::string(s);
  const auto prefix = s.substr(0, codepoint_prefix(s, max_chars));
  std::size_t cut = 0;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const char c = prefix[i];
    if (c == '.' || c == '!' || c == '?') cut = i + 1;
  }
  for (std::string_view term : {"\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F"}) {  // 。！？
    auto pos = prefix.rfind(term);
    if (pos != std::string_view::npos) cut = std::max(cut, pos + term.size());
  }
  if (cut == 0) {
    auto space = prefix.find_last_of(" \t\n");
    cut = (space == std::string_view::npos || space == 0) ? prefix.size() : space;
  }
  return std::string(prefix.substr(0, cut));
}

std::string clean_once(std::string_view raw, std::size_t max_chars) {
  std::string s(text::trim(raw));
  s = std::string(text::trim(unwrap_quotes(s)));
  s = std::string(text::trim(strip_label(s)));
  s = std::string(text::trim(unwrap_quotes(s)));
  s = std::string(text::trim(truncate_at_sentence(s, max_chars)));
  return s;
}

}  // namespace

std::string postprocess(std::string_view raw, std::size_t max_chars) {
  std::string current(raw);
  // Each pass only shortens the text, so this reaches a fixed point; running
  // to the fixed point is what makes postprocess idempotent.
  for (;;) {
    std::string next = clean_once(current, max_chars);
    if (next == current) break;
    current = std::move(next);
  }
  if (current.empty()) throw Error(Errc::EmptyAfterCleaning, "completion empty after cleaning");
  return current;
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fingerprint(const RenderedPrompt& p) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(p.kind) * 131 + static_cast<std::uint64_t>(p.phase));
  for (SlotName s : p.filled_slots) h = mix64(h ^ (static_cast<std::uint64_t>(s) + 1));
  h = mix64(h ^ (p.customer_name ? 7u : 3u));
  return h;
}

const std::string& pick(const std::vector<std::string>& variants, std::uint64_t seed, std::size_t phase_turn) {
  return variants[(seed % variants.size() + phase_turn) % variants.size()];
}

std::string name_suffix(const RenderedPrompt& p) { return p.customer_name ? ", " + *p.customer_name : ""; }

std::string mock_dialogue_text(const RenderedPrompt& p, std::uint64_t seed) {
  const auto n = name_suffix(p);
  switch (p.phase) {
    case Phase::Greeting: {
      static const std::vector<std::string> v = {
          "Hello and welcome to our travel agency! I will be helping you plan your trip to Kyoto today. "
          "May I have your name, please?",
          "Welcome, it is a pleasure to see you! Before we start planning your Kyoto trip, could you tell me "
          "your name?"};
      return pick(v, seed, p.phase_turn);
    }
    case Phase::IceBreak: {
      const std::vector<std::string> v = {
          "It is lovely to meet you" + n + "! Kyoto has so many quiet temples and old streets. "
          "Have you ever been there before?",
          "Thank you" + n + "! Kyoto is one of my favorite cities, especially the little cafes along the river. "
          "What comes to mind when you think of Kyoto?",
          "I see" + n + ". People often say the best part of Kyoto is simply strolling around. "
          "Do you enjoy walking when you travel?"};
      return pick(v, seed, p.phase_turn);
    }
    case Phase::Question: {
      if (!p.pending_item) {
        static const std::vector<std::string> v = {
            "Thank you, that gives me a clear picture of your trip. Is there anything else I should know?",
            "Wonderful, I think I understand what you are looking for. Anything else you would like to add?"};
        return pick(v, seed, p.phase_turn);
      }
      switch (*p.pending_item) {
        case SlotName::TravelPurpose: {
          static const std::vector<std::string> v = {
              "Now, what would you most like to do in Kyoto? For example history, nature, food, relaxing or "
              "shopping?",
              "Let me ask a few questions about your trip. What is the main purpose of your visit to Kyoto?"};
          return pick(v, seed, p.phase_turn);
        }
        case SlotName::Companions: {
          static const std::vector<std::string> v = {"Who will you be traveling with?",
                                                     "Will you be going alone, or with family or friends?"};
          return pick(v, seed, p.phase_turn);
        }
        default: {
          static const std::vector<std::string> v = {"Which season are you planning to visit in?",
                                                     "And when would you like to go? Which season suits you best?"};
          return pick(v, seed, p.phase_turn);
        }
      }
    }
    case Phase::Recommendation: {
      if (!p.plan || p.plan->items.empty()) {
        static const std::vector<std::string> v = {"Let me think about the best places for you.",
                                                   "I am putting together some ideas for you."};
        return pick(v, seed, p.phase_turn);
      }
      const auto names = p.plan->spot_names();
      const auto& top = p.plan->items.front().spot;
      const std::vector<std::string> v = {
          "For your trip I would recommend " + text::join(names, ", ") + ". Let me start with " + top.name +
              " in " + top.area + ". " + top.description,
          "Based on what you told me, my suggestions are " + text::join(names, ", ") + ". " + top.name +
              " comes first: " + top.description};
      return pick(v, seed, p.phase_turn);
    }
    case Phase::Closing: {
      const std::vector<std::string> v = {
          "Thank you so much for talking with me today" + n + ". I hope you have a wonderful time in Kyoto!",
          "It was a pleasure helping you" + n + ". Enjoy your trip to Kyoto, and take care!"};
      return pick(v, seed, p.phase_turn);
    }
    case Phase::Done:
      break;
  }
  return "Thank you.";
}

std::string mock_judge_text(const RenderedPrompt& p) {
  return text::count_chars(p.candidate).alphabetic == 0 ? "BREAKDOWN" : "OK";
}

}  // namespace

BackendResponse mock_complete(const RenderedPrompt& prompt, std::uint64_t seed) {
  const std::uint64_t h = mix64(fingerprint(prompt) ^ mix64(seed) ^ (prompt.phase_turn * 0x100000001B3ULL));
  BackendResponse r;
  r.source = ResponseSource::Mock;
  if (prompt.kind == PromptKind::BreakdownJudge) {
    r.text = mock_judge_text(prompt);
    r.latency_ms = 80 + static_cast<std::int64_t>(h % 170);
  } else {
    r.text = mock_dialogue_text(prompt, seed);
    r.latency_ms = 150 + static_cast<std::int64_t>(h % 650);
  }
  return r;
}

BackendReply MockBackend::complete(const RenderedPrompt& prompt) {
  auto r = mock_complete(prompt, prompt.seed);
  return BackendReply{std::move(r.text), r.latency_ms};
}

// ---------------------------------------------------------------------------
// Deadline watchdog

namespace {

struct PendingCall {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::optional<std::string> text;
};

BackendResponse make_fallback(const RenderedPrompt& prompt, std::int64_t latency_ms) {
  return BackendResponse{prompt.fallback_text, latency_ms, ResponseSource::Fallback};
}

}  // namespace

BackendResponse complete_with_deadline(const RenderedPrompt& prompt, const BackendConfig& config,
                                       const std::shared_ptr<CompletionBackend>& backend,
                                       std::optional<std::chrono::milliseconds> budget) {
  using namespace std::chrono;
  std::int64_t allowed_ms = config.deadline_ms;
  if (budget) allowed_ms = std::min<std::int64_t>(allowed_ms, budget->count());
  if (allowed_ms <= 0 || !backend) return make_fallback(prompt, 0);

  auto finish = [&](std::string raw, std::int64_t latency_ms) {
    try {
      return BackendResponse{postprocess(raw, config.max_utterance_chars), latency_ms, backend->source()};
    } catch (const Error&) {
      return make_fallback(prompt, latency_ms);
    }
  };

  const auto start = steady_clock::now();
  auto elapsed_ms = [&] { return duration_cast<milliseconds>(steady_clock::now() - start).count(); };

  if (backend->runs_inline()) {
    BackendReply reply;
    try {
      reply = backend->complete(prompt);
    } catch (...) {
      return make_fallback(prompt, elapsed_ms());
    }
    const auto latency = reply.modeled_latency_ms.value_or(elapsed_ms());
    if (latency > allowed_ms) return make_fallback(prompt, allowed_ms);
    return finish(std::move(reply.text), latency);
  }

  // The worker owns copies of everything it touches, so abandoning it leaves
  // no dangling references; its eventual result lands in `call` and nowhere else.
  auto call = std::make_shared<PendingCall>();
  std::thread([call, backend, prompt_copy = prompt] {
    std::optional<std::string> result;
    try {
      result = backend->complete(prompt_copy).text;
    } catch (...) {
    }
    std::lock_guard lock(call->mu);
    call->text = std::move(result);
    call->done = true;
    call->cv.notify_all();
  }).detach();

  std::unique_lock lock(call->mu);
  if (!call->cv.wait_until(lock, start + milliseconds(allowed_ms), [&] { return call->done; })) {
    return make_fallback(prompt, elapsed_ms());
  }
  auto text = std::move(call->text);
  lock.unlock();
  if (!text) return make_fallback(prompt, elapsed_ms());
  return finish(std::move(*text), elapsed_ms());
}

}  // namespace travel
