// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "travel/breakdown_eval.hpp"
#include "travel/error.hpp"
#include "travel/session_service.hpp"
#include "travel/simulator.hpp"

using namespace travel;
using Steady = std::chrono::steady_clock;

namespace {

const std::string kRecoveryPhrase =
    "I'm sorry. Did I say something wrong? Or I may not have been able to catch our conversation. Could you please "
    "tell me again?";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Steady::time_point start) {
  return std::chrono::duration<double>(Steady::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<PersonaScript>& personas() {
  static const auto p = load_personas(testing::data_dir() / "personas.json");
  return p;
}

const PersonaScript& persona(const std::string& name) {
  for (const auto& p : personas()) {
    if (p.name == name) return p;
  }
  throw std::runtime_error("missing persona " + name);
}

// 1000 dialogues across all personas, shared by two criteria.
const SimResult& thousand_run(double* elapsed = nullptr) {
  static double took = 0;
  static const SimResult result = [] {
    SimOptions options;
    options.dialogues_per_persona = 1000 / personas().size();
    options.seed = 20240601;
    const auto start = Steady::now();
    auto r = simulate(personas(), testing::mock_deps(), options);
    took = seconds_since(start);
    return r;
  }();
  if (elapsed) *elapsed = took;
  return result;
}

// ---------------------------------------------------------------------------

Outcome verbatim_recovery() {
  const auto start = Steady::now();
  auto deps = testing::mock_deps();
  std::size_t checked = 0, wrong = 0;

  // Heuristic trigger (empty input) and a forced judge verdict on ordinary text.
  auto s = open_session(new_session(1, "v1"), deps).session;
  auto r = run_turn(s, "", deps);
  ++checked;
  wrong += r.reply.text != kRecoveryPhrase;

  auto forced = deps;
  forced.backend = std::make_shared<testing::ScriptedBackend>([](const RenderedPrompt& p) {
    return p.kind == PromptKind::BreakdownJudge ? std::string("BREAKDOWN") : std::string("Hello!");
  });
  s = open_session(new_session(2, "v2"), forced).session;
  r = run_turn(s, "I would like to visit some temples.", forced);
  ++checked;
  wrong += r.reply.text != kRecoveryPhrase || r.reply.provenance != Provenance::Recovery;

  const double t = seconds_since(start);
  return {wrong == 0 && t < 1.0, std::to_string(checked - wrong) + "/" + std::to_string(checked) +
                                     " byte-identical, " + fmt("%.3f s", t)};
}

Outcome detection_every_turn() {
  double elapsed = 0;
  const auto& run = thousand_run(&elapsed);
  std::size_t customer = 0, missing = 0;
  for (const auto& d : run.dialogues) {
    for (const auto& t : d.session.transcript) {
      if (t.speaker != Speaker::Customer) continue;
      ++customer;
      missing += !t.breakdown.has_value();
    }
  }
  return {missing == 0 && run.dialogues.size() == 1000 && elapsed < 60.0,
          std::to_string(run.dialogues.size()) + " dialogues, " + std::to_string(customer - missing) + "/" +
              std::to_string(customer) + " customer turns with a verdict, " + fmt("%.2f s", elapsed)};
}

Outcome phase_order() {
  const auto& run = thousand_run();
  const std::vector<Phase> order(kAllPhases.begin(), kAllPhases.end());
  std::size_t violations = 0;
  for (const auto& d : run.dialogues) {
    const auto& tr = d.session.transcript;
    std::vector<Phase> dedup;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (dedup.empty() || dedup.back() != tr[i].phase) dedup.push_back(tr[i].phase);
      if (i > 0) {
        const int step = phase_rank(tr[i].phase) - phase_rank(tr[i - 1].phase);
        if (step < 0 || step > 1) ++violations;
      }
    }
    if (dedup.size() > order.size() || !std::equal(dedup.begin(), dedup.end(), order.begin())) ++violations;
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(run.dialogues.size()) +
                               " transcripts"};
}

Outcome slot_completion() {
  SimOptions options;
  options.dialogues_per_persona = 100;
  options.seed = 7;
  const auto deps = testing::mock_deps();
  const auto scenario = default_scenario();

  std::size_t coop_ok = 0;
  for (const auto& d : simulate({persona("cooperative")}, deps, options).dialogues) {
    // Rebuild turn by turn and look at the slots on entering Recommendation.
    Session s = new_session(d.session.rng_seed, d.session.id);
    bool ok = false;
    for (const auto& t : d.session.transcript) {
      s = apply_recorded_turn(s, t, scenario);
      if (s.phase == Phase::Recommendation) {
        ok = std::all_of(kQuestionSlots.begin(), kQuestionSlots.end(), [&](SlotName n) {
          const auto* v = find_slot(s, n);
          return v != nullptr && !v->is_default();
        });
        break;
      }
    }
    coop_ok += ok;
  }

  std::size_t garbler_ok = 0;
  for (const auto& d : simulate({persona("garbler")}, deps, options).dialogues) {
    const auto& s = d.session;
    const bool defaults = std::all_of(kQuestionSlots.begin(), kQuestionSlots.end(), [&](SlotName n) {
      const auto* v = find_slot(s, n);
      return v != nullptr && v->is_default() && v->normalized == scenario.slot_defaults.at(n);
    });
    garbler_ok += s.phase == Phase::Done && defaults;
  }
  return {coop_ok == 100 && garbler_ok == 100, "cooperative " + std::to_string(coop_ok) + "/100 with 3/3 slots, " +
                                                   "garbler " + std::to_string(garbler_ok) + "/100 Done with defaults"};
}

// Replies instantly until switched to slow, then sleeps before answering
// with a marker that must never reach a transcript.
class SwitchableStub : public CompletionBackend {
 public:
  std::atomic<bool> slow{false};
  static constexpr const char* kLate = "LATE-RESULT-SHOULD-NEVER-APPEAR";

  BackendReply complete(const RenderedPrompt& p) override {
    if (!slow) return {p.kind == PromptKind::BreakdownJudge ? "OK" : "Hello, welcome!", std::nullopt};
    std::this_thread::sleep_for(std::chrono::seconds(20));
    return {kLate, std::nullopt};
  }
  ResponseSource source() const override { return ResponseSource::Remote; }
};

Outcome deadline_watchdog() {
  testing::TempDir dir;
  EngineConfig config;
  config.backend.deadline_ms = 8000;
  auto deps = testing::mock_deps(config);
  deps.clock = wall_clock_ms;
  auto stub = std::make_shared<SwitchableStub>();
  deps.backend = stub;
  auto log = std::make_shared<TranscriptLog>(dir / "t.jsonl");
  SessionService service(deps, log, ServiceOptions{64, 0});

  constexpr int kTrials = 50;
  std::vector<std::string> ids;
  for (int i = 0; i < kTrials; ++i) ids.push_back(service.create_session().id);
  stub->slow = true;

  // Trials run concurrently on separate sessions; each is timed on its own.
  std::vector<double> took(kTrials, 0.0);
  std::vector<std::string> errors(kTrials);
  std::vector<std::thread> threads;
  for (int i = 0; i < kTrials; ++i) {
    threads.emplace_back([&, i] {
      const auto start = Steady::now();
      try {
        service.post_turn(ids[static_cast<std::size_t>(i)], "We would like to see temples in autumn.");
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
      took[static_cast<std::size_t>(i)] = seconds_since(start);
    });
  }
  for (auto& t : threads) t.join();

  // Let every abandoned call finish, then look for its result anywhere.
  std::this_thread::sleep_for(std::chrono::seconds(21));
  std::size_t leaked = 0;
  for (const auto& id : ids) {
    for (const auto& t : service.get_session(id).transcript) leaked += t.text.find(SwitchableStub::kLate) != std::string::npos;
  }
  leaked += slurp(dir / "t.jsonl").find(SwitchableStub::kLate) != std::string::npos;

  const double worst = *std::max_element(took.begin(), took.end());
  const auto failed = std::count_if(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); });
  const bool pass = worst <= 8.5 && leaked == 0 && failed == 0;
  return {pass, std::to_string(kTrials) + " trials, worst " + fmt("%.3f s", worst) + ", " + std::to_string(failed) +
                    " errors, " + std::to_string(leaked) + " late results in transcripts"};
}

Outcome recommendation_oracle() {
  const auto& spots = *testing::bundled_spots();
  const std::vector<std::string> purposes = {"history", "nature", "food", "relaxation", "shopping"};
  const std::vector<std::string> seasons = {"spring", "summer", "autumn", "winter", "any"};
  const std::vector<std::string> companions = {"family", "partner", "friends", "alone", "colleagues", "unspecified"};
  std::mt19937_64 rng(2718);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    SlotMap slots;
    auto maybe = [&](SlotName name, const std::vector<std::string>& values) {
      if (rng() % 5 == 0) return;  // leave unset sometimes
      const auto& v = values[rng() % values.size()];
      slots[name] = SlotValue{v, v, 0.8, 1};
    };
    maybe(SlotName::TravelPurpose, purposes);
    maybe(SlotName::Season, seasons);
    maybe(SlotName::Companions, companions);
    const std::size_t k = 1 + rng() % spots.size();
    if (compose_plan(spots, slots, k).spot_names() != oracle::top_names(spots, slots, k)) ++mismatches;
  }
  return {mismatches == 0 && spots.size() <= 20,
          std::to_string(mismatches) + " mismatches over 200 combinations, " + std::to_string(spots.size()) + " spots"};
}

Outcome grounding() {
  std::set<std::string> kb;
  for (const auto& s : *testing::bundled_spots()) kb.insert(s.name);

  std::size_t prompts = 0, names = 0, violations = 0;
  const std::regex item(R"(^\d+\. (.+) \([^()]*\): )");
  auto deps = testing::mock_deps();
  deps.on_prompt = [&](const RenderedPrompt& p) {
    if (p.phase != Phase::Recommendation || p.kind != PromptKind::Dialogue) return;
    ++prompts;
    if (!p.plan || p.plan->items.empty()) {
      ++violations;
      return;
    }
    for (const auto& it : p.plan->items) violations += kb.count(it.spot.name) == 0;
    // Read the names back out of the rendered prompt text as well.
    std::istringstream lines(p.messages.front().content);
    std::size_t found = 0;
    for (std::string line; std::getline(lines, line);) {
      std::smatch m;
      if (std::regex_search(line, m, item)) {
        ++found;
        ++names;
        violations += kb.count(m[1].str()) == 0;
      }
    }
    violations += found != p.plan->items.size();
  };
  SimOptions options;
  options.dialogues_per_persona = 40;
  options.seed = 99;
  simulate(personas(), deps, options);
  return {violations == 0 && prompts > 0, std::to_string(prompts) + " recommendation prompts, " +
                                              std::to_string(names) + " injected names, " +
                                              std::to_string(violations) + " violations"};
}

Outcome replay_fidelity() {
  std::size_t diffs = 0;
  std::string crash_detail;
  {
    testing::TempDir dir;
    auto log = std::make_shared<TranscriptLog>(dir / "t.jsonl");
    SimOptions options;
    options.dialogues_per_persona = 20 / personas().size();
    options.seed = 31337;
    options.log = log.get();
    const auto deps = testing::mock_deps();
    const auto before = simulate(personas(), deps, options);
    log.reset();

    // Restart: a fresh service loads the log.
    SessionService restarted(deps, std::make_shared<TranscriptLog>(dir / "t.jsonl"));
    const auto restored = restarted.restore();
    diffs += restored != before.dialogues.size();
    for (const auto& d : before.dialogues) diffs += restarted.get_session(d.session.id) != d.session;
  }

  // Crash between persisting the customer turn and the reply, at several
  // points in the dialogue.
  std::size_t crash_ok = 0;
  const std::vector<std::size_t> kill_after = {1, 3, 5, 8};
  for (std::size_t posts : kill_after) {
    testing::TempDir dir;
    std::string id;
    {
      SessionService svc(testing::mock_deps(), std::make_shared<TranscriptLog>(dir / "t.jsonl"));
      id = svc.create_session().id;
      for (std::size_t i = 0; i < posts; ++i) svc.post_turn(id, i % 3 == 2 ? "@@@" : "I see, sounds nice.");
    }
    const pid_t child = fork();
    if (child == 0) {
      SessionService svc(testing::mock_deps(), std::make_shared<TranscriptLog>(dir / "t.jsonl"));
      svc.restore();
      svc.after_persist_hook = [](const Session&, const Turn& t) {
        if (t.speaker == Speaker::Customer) _exit(0);
      };
      svc.post_turn(id, "Tell me more, please.");
      _exit(2);
    }
    int status = 0;
    waitpid(child, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) continue;
    try {
      const auto partial = replay_transcript(dir / "t.jsonl", id, default_scenario());
      SessionService svc(testing::mock_deps(), std::make_shared<TranscriptLog>(dir / "t.jsonl"));
      svc.restore();
      const auto repaired = svc.get_session(id);
      const bool prefix = std::equal(partial.transcript.begin(), partial.transcript.end(), repaired.transcript.begin());
      const bool ok = awaiting_reply(partial) && !awaiting_reply(repaired) &&
                      repaired.transcript.size() == partial.transcript.size() + 1 && prefix &&
                      replay_transcript(dir / "t.jsonl", id, default_scenario()) == repaired;
      crash_ok += ok;
    } catch (const Error&) {
      // CorruptLog or anything else counts as a failed recovery.
    }
  }
  crash_detail = std::to_string(crash_ok) + "/" + std::to_string(kill_after.size()) + " crash points recovered";
  return {diffs == 0 && crash_ok == kill_after.size(),
          std::to_string(diffs) + " diffs over 20 dialogues, " + crash_detail};
}

Outcome eval_harness() {
  const auto corpus = load_corpus(testing::data_dir() / "breakdown_corpus.jsonl");
  EngineConfig config;
  const auto scores = eval_breakdown(corpus, config, std::make_shared<MockBackend>());
  const auto& h = scores.front();
  const auto recall = h.recall();
  const bool pass = h.detector == DetectorId::Heuristic && recall && *recall == 1.0 && h.precision() == 1.0;
  return {pass, "heuristic recall " + (recall ? fmt("%.4f", *recall) : std::string("n/a")) + ", precision " +
                    fmt("%.4f", h.precision()) + " on " + std::to_string(corpus.size()) + " exchanges"};
}

Outcome determinism() {
  testing::TempDir dir;
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    TranscriptLog log(dir / ("run" + std::to_string(run) + ".jsonl"));
    SimOptions options;
    options.dialogues_per_persona = 50;
    options.seed = 4242;
    options.log = &log;
    const auto result = simulate(personas(), testing::mock_deps(), options);
    reports[run] = report_to_json(result.report).dump(2) + "\n" + report_table(result.report);
  }
  const auto a = slurp(dir / "run0.jsonl");
  const auto b = slurp(dir / "run1.jsonl");
  const bool same_reports = reports[0] == reports[1];
  const bool same_logs = a == b && !a.empty();
  return {same_reports && same_logs, std::string("reports ") + (same_reports ? "identical" : "differ") +
                                         ", transcripts " + (same_logs ? "identical" : "differ") + " (" +
                                         std::to_string(a.size()) + " bytes)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"verbatim-recovery", verbatim_recovery},
      {"detection-every-turn", detection_every_turn},
      {"phase-order", phase_order},
      {"slot-completion", slot_completion},
      {"deadline-watchdog", deadline_watchdog},
      {"recommendation-oracle", recommendation_oracle},
      {"grounding", grounding},
      {"replay-fidelity", replay_fidelity},
      {"breakdown-eval", eval_harness},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
