#include <doctest.h>

#include <random>

#include "support.hpp"
#include "travel/error.hpp"
#include "travel/text.hpp"
#include "travel/understanding.hpp"

using namespace travel;

namespace {

const Lexicons kLex = default_lexicons();

std::map<SlotName, std::string> extract(std::string_view text, Phase phase = Phase::Question,
                                        const SlotMap& existing = {}) {
  std::map<SlotName, std::string> out;
  for (const auto& e : extract_slots(text, phase, existing, kLex)) out[e.name] = e.value.normalized;
  return out;
}

Turn said(Speaker who, std::string text) {
  Turn t;
  t.speaker = who;
  t.text = std::move(text);
  return t;
}

std::string heuristic(std::vector<Turn> context, std::string_view candidate) {
  return detect_breakdown_heuristic(context, candidate, DetectorConfig{}, kLex).reason;
}

// Quadratic-space reference: try every substring of a against b.
std::size_t lcs_brute(const std::string& a, const std::string& b) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t len = 1; i + len <= a.size(); ++len) {
      if (b.find(a.substr(i, len)) == std::string::npos) break;
      best = std::max(best, len);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("name extraction") {
  using M = std::map<SlotName, std::string>;
  CHECK(extract("hello, I'm Mei", Phase::Greeting) == M{{SlotName::CustomerName, "Mei"}});
  CHECK(extract("My name is Mei Tanaka.", Phase::Greeting) == M{{SlotName::CustomerName, "Mei Tanaka"}});
  CHECK(extract("my name is ken", Phase::Greeting) == M{{SlotName::CustomerName, "Ken"}});
  CHECK(extract("Sofia.", Phase::Greeting) == M{{SlotName::CustomerName, "Sofia"}});
  CHECK(extract("Call me Alex, please", Phase::Greeting) == M{{SlotName::CustomerName, "Alex"}});
  // "I'm" only introduces capitalized names.
  CHECK(extract("i'm fine thanks", Phase::Greeting).empty());
  CHECK(extract("I'm traveling with my wife", Phase::Greeting) == M{{SlotName::Companions, "partner"}});
  CHECK(extract("Hello there", Phase::Greeting).empty());
  // Names are only looked for in the greeting.
  CHECK(extract("My name is Mei", Phase::IceBreak).empty());
}

TEST_CASE("question item extraction") {
  using M = std::map<SlotName, std::string>;
  CHECK(extract("I love history and temples") == M{{SlotName::TravelPurpose, "history"}});
  CHECK(extract("With my kids, in October") ==
        M{{SlotName::Companions, "family"}, {SlotName::Season, "autumn"}});
  CHECK(extract("Going to a hot spring in winter") ==
        M{{SlotName::TravelPurpose, "relaxation"}, {SlotName::Season, "winter"}});
  CHECK(extract("just me") == M{{SlotName::Companions, "alone"}});
  CHECK(extract("Nothing in particular").empty());
  CHECK(extract("").empty());
}

TEST_CASE("capitalized month terms only match mid-sentence capitals") {
  using M = std::map<SlotName, std::string>;
  CHECK(extract("We go in May") == M{{SlotName::Season, "spring"}});
  CHECK(extract("you may like it").empty());
  CHECK(extract("May I ask something?").empty());
  CHECK(extract("Probably March.") == M{{SlotName::Season, "spring"}});
  CHECK(extract("we march on").empty());
}

TEST_CASE("exact answers get full confidence and outrank rule matches") {
  const auto exact = extract_slots("winter", Phase::Question, {}, kLex);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].value.confidence == kExactMatchConfidence);
  CHECK(exact[0].value.raw_evidence == "winter");

  SlotMap existing{{SlotName::Season, exact[0].value}};
  CHECK(extract("maybe in summer", Phase::Question, existing).empty());
  CHECK(extract("summer", Phase::Question, existing) == std::map<SlotName, std::string>{{SlotName::Season, "summer"}});
}

TEST_CASE("heuristic detector classes") {
  CHECK(heuristic({}, "") == "empty");
  CHECK(heuristic({}, "   ") == "empty");
  CHECK(heuristic({}, "#$%&!") == "low_alpha_ratio");
  CHECK(heuristic({}, "12 345 a") == "low_alpha_ratio");
  CHECK(heuristic({}, "huh?") == "confusion_marker");
  CHECK(heuristic({}, "Sorry, what do you mean?") == "confusion_marker");
  CHECK(heuristic({}, "Sorry, I meant autumn") == "none");
  CHECK(heuristic({said(Speaker::Customer, "I like temples"), said(Speaker::System, "Great")}, "i like  TEMPLES") ==
        "repetition");
  CHECK(heuristic({said(Speaker::System, "I like temples")}, "I like temples") == "none");
  CHECK(heuristic({}, "I would like to see some temples") == "none");

  const auto v = detect_breakdown_heuristic({}, "", DetectorConfig{}, kLex);
  CHECK(v.is_breakdown);
  CHECK(v.score == 1.0);
  CHECK(v.detector_id == DetectorId::Heuristic);

  DetectorConfig lenient;
  lenient.threshold = 1.0;
  CHECK(detect_breakdown_heuristic({}, "", lenient, kLex).is_breakdown);
}

TEST_CASE("repetition overlap agrees with a brute-force longest common substring") {
  std::mt19937_64 rng(99);
  const std::string alphabet = "ab c";
  for (int trial = 0; trial < 500; ++trial) {
    std::string a, b;
    for (auto n = rng() % 12; n > 0; --n) a += alphabet[rng() % alphabet.size()];
    for (auto n = rng() % 12; n > 0; --n) b += alphabet[rng() % alphabet.size()];
    CHECK(text::longest_common_substring(a, b) == lcs_brute(a, b));
    const auto na = text::to_lower(text::collapse_whitespace(a));
    const auto nb = text::to_lower(text::collapse_whitespace(b));
    const auto longest = std::max(na.size(), nb.size());
    const double expected = longest == 0 ? 0.0 : static_cast<double>(lcs_brute(na, nb)) / static_cast<double>(longest);
    CHECK(repetition_overlap(a, b) == doctest::Approx(expected));
  }
}

TEST_CASE("judge reply parsing") {
  CHECK(parse_judge_reply("BREAKDOWN") == true);
  CHECK(parse_judge_reply("  ok. ") == false);
  CHECK(parse_judge_reply("\"Breakdown!\"") == true);
  CHECK_FALSE(parse_judge_reply("I think OK").has_value());
  CHECK_FALSE(parse_judge_reply("").has_value());
}

TEST_CASE("judge prompt carries context and candidate") {
  std::vector<Turn> ctx = {said(Speaker::System, "Where to?"), said(Speaker::Customer, "Kyoto")};
  const auto p = render_judge_prompt(ctx, "???", default_judge_template(), Phase::Question, 5);
  CHECK(p.kind == PromptKind::BreakdownJudge);
  CHECK(p.candidate == "???");
  REQUIRE(p.messages.size() == 2);
  CHECK(p.messages[1].content.find("Agent: Where to?\nCustomer: Kyoto") != std::string::npos);
  CHECK(p.messages[1].content.find("Latest customer utterance: ???") != std::string::npos);
  CHECK(render_judge_prompt({}, "x", default_judge_template(), Phase::Greeting, 0)
            .messages[1]
            .content.find("(start of conversation)") != std::string::npos);
}

TEST_CASE("judge fails open") {
  BackendConfig config;
  auto check = [&](std::shared_ptr<CompletionBackend> backend, bool breakdown, const std::string& reason) {
    const auto out = judge_breakdown({}, "hello", backend, config, default_judge_template(), Phase::Greeting, 0);
    CHECK(out.verdict.is_breakdown == breakdown);
    CHECK(out.verdict.reason == reason);
    CHECK(out.verdict.detector_id == DetectorId::Prompted);
  };
  check(std::make_shared<testing::StubBackend>("BREAKDOWN"), true, "judge_breakdown");
  check(std::make_shared<testing::StubBackend>("ok"), false, "judge_ok");
  check(std::make_shared<testing::StubBackend>("perhaps"), false, "judge_unavailable");
  check(std::make_shared<testing::ThrowingBackend>(), false, "judge_unavailable");
  config.deadline_ms = 50;
  check(std::make_shared<testing::StubBackend>("BREAKDOWN", std::chrono::milliseconds(500)), false,
        "judge_unavailable");
}

TEST_CASE("combining verdicts") {
  BreakdownVerdict h{true, 1.0, "empty", DetectorId::Heuristic};
  BreakdownVerdict ok_h{false, 0.0, "none", DetectorId::Heuristic};
  BreakdownVerdict p{true, 1.0, "judge_breakdown", DetectorId::Prompted};
  BreakdownVerdict ok_p{false, 0.0, "judge_ok", DetectorId::Prompted};

  CHECK(combine_verdicts(h, p) == BreakdownVerdict{true, 1.0, "empty+judge_breakdown", DetectorId::Combined});
  CHECK(combine_verdicts(ok_h, p).reason == "judge_breakdown");
  CHECK(combine_verdicts(h, ok_p).reason == "empty");
  CHECK(combine_verdicts(h, std::nullopt).is_breakdown);
  CHECK(combine_verdicts(ok_h, ok_p) == BreakdownVerdict{false, 0.0, "none", DetectorId::Combined});
}

TEST_CASE("recovery utterance is the fixed apology") {
  CHECK(recovery_utterance() ==
        "I'm sorry. Did I say something wrong? Or I may not have been able to catch our conversation. Could you "
        "please tell me again?");
}

TEST_CASE("detector config validation") {
  DetectorConfig c;
  CHECK_NOTHROW(validate_detector_config(c));
  c.threshold = 1.5;
  CHECK_THROWS_AS(validate_detector_config(c), Error);
}
