// travel-agent: operator CLI for the dialogue engine.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "travel/breakdown_eval.hpp"
#include "travel/config.hpp"
#include "travel/error.hpp"
#include "travel/http_server.hpp"
#include "travel/json_codec.hpp"
#include "travel/openai_backend.hpp"
#include "travel/session_service.hpp"
#include "travel/simulator.hpp"
#include "travel/transcript_log.hpp"

using namespace travel;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string spots_path;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Configuration file (JSON)");
  cmd->add_option("--spots", opts.spots_path, "Spot knowledge base (JSON Lines)");
}

AppConfig resolve_config(const CommonOptions& opts) {
  AppConfig config = opts.config_path.empty() ? default_app_config() : load_config(opts.config_path);
  apply_env_overrides(config);
  if (!opts.spots_path.empty()) config.spots_path = opts.spots_path;
  return config;
}

std::string slot_summary(const Session& s) {
  std::string out;
  for (auto name : {SlotName::CustomerName, SlotName::TravelPurpose, SlotName::Companions, SlotName::Season}) {
    if (!out.empty()) out += "; ";
    const auto* v = find_slot(s, name);
    out += std::string(slot_label(name)) + "=" + (v ? v->normalized + (v->is_default() ? " (default)" : "") : "-");
  }
  return out;
}

void print_summary(const Session& s) {
  std::size_t system = 0;
  for (const auto& t : s.transcript) system += t.speaker == Speaker::System ? 1 : 0;
  std::cout << "-- session " << s.id << "\n"
            << "phase: " << phase_name(s.phase) << "\n"
            << "status: " << status_name(s.status) << "\n"
            << "system turns: " << system << "\n"
            << "customer turns: " << s.transcript.size() - system << "\n"
            << "recoveries: " << s.recovery_total << "\n"
            << "slots: " << slot_summary(s) << "\n";
}

void print_turn(const Turn& t) {
  std::cout << "#" << t.index << " [" << phase_name(t.phase) << "] " << speaker_name(t.speaker);
  if (t.speaker == Speaker::System) std::cout << " (" << provenance_name(t.provenance) << ")";
  std::cout << ": " << t.text;
  if (t.breakdown && t.breakdown->is_breakdown) std::cout << "  <breakdown: " << t.breakdown->reason << ">";
  std::cout << "\n";
}

int run_chat(const CommonOptions& common, const std::string& log_path) {
  const auto config = resolve_config(common);
  auto deps = make_pipeline_deps(config);
  std::unique_ptr<TranscriptLog> log;
  if (!log_path.empty()) log = std::make_unique<TranscriptLog>(log_path);

  auto opened = open_session(new_session(0), deps);
  Session session = std::move(opened.session);
  if (log) persist_turn(*log, session, opened.reply);
  std::cout << "[" << phase_name(opened.reply.phase) << "] " << opened.reply.text << std::endl;

  std::string line;
  while (session.status == SessionStatus::Active && std::getline(std::cin, line)) {
    TurnBudget budget(config.engine.backend.deadline_ms);
    session = accept_customer_turn(std::move(session), line, deps, budget);
    const Turn& customer = session.transcript.back();
    if (log) persist_turn(*log, session, customer);
    if (customer.breakdown && customer.breakdown->is_breakdown) {
      std::cout << "  (breakdown: " << customer.breakdown->reason << ")" << std::endl;
    }
    auto result = respond(std::move(session), deps, budget);
    session = std::move(result.session);
    if (log) persist_turn(*log, session, result.reply);
    std::cout << "[" << phase_name(result.reply.phase) << "] " << result.reply.text << std::endl;
  }
  print_summary(session);
  return 0;
}

int run_simulate(const CommonOptions& common, const std::string& personas_path, std::size_t n, std::uint64_t seed,
                 const std::string& format, const std::string& log_path) {
  auto config = resolve_config(common);
  // Simulation always runs against the mock so that results are reproducible.
  config.engine.backend.endpoint_url.clear();
  auto deps = make_pipeline_deps(config);
  const auto personas = load_personas(personas_path);
  std::unique_ptr<TranscriptLog> log;
  if (!log_path.empty()) log = std::make_unique<TranscriptLog>(log_path);
  SimOptions options;
  options.dialogues_per_persona = n;
  options.seed = seed;
  options.log = log.get();
  const auto result = simulate(personas, deps, options);
  if (format == "json") {
    std::cout << report_to_json(result.report).dump(2) << "\n";
  } else {
    std::cout << report_table(result.report);
  }
  return 0;
}

int run_eval(const CommonOptions& common, const std::string& corpus_path, const std::string& format) {
  auto config = resolve_config(common);
  auto backend = make_backend(config.engine.backend);
  const auto scores = eval_breakdown(load_corpus(corpus_path), config.engine, backend);
  if (format == "json") {
    std::cout << eval_to_json(scores).dump(2) << "\n";
  } else {
    std::cout << eval_table(scores);
  }
  return 0;
}

// Prints the replayed transcript, then checks it. Returns 0 when every check
// passes.
int run_replay(const CommonOptions& common, const std::string& log_path, const std::string& id) {
  const auto config = resolve_config(common);
  const Session session = replay_transcript(log_path, id, config.engine.scenario);
  for (const auto& t : session.transcript) print_turn(t);
  print_summary(session);

  std::vector<std::string> failures;
  for (std::size_t i = 1; i < session.transcript.size(); ++i) {
    if (phase_rank(session.transcript[i].phase) < phase_rank(session.transcript[i - 1].phase)) {
      failures.push_back("phase decreases at turn " + std::to_string(i));
    }
  }
  std::size_t recoveries = 0;
  for (const auto& t : session.transcript) recoveries += t.provenance == Provenance::Recovery ? 1 : 0;
  if (recoveries != session.recovery_total) failures.push_back("recovery counter disagrees with transcript");
  if (session_from_json(session_to_json(session)) != session) failures.push_back("snapshot does not round-trip");
  if (!session.transcript.empty() && session.transcript.back().phase != session.phase &&
      session.phase != Phase::Done) {
    failures.push_back("last turn phase differs from session phase");
  }
  for (const auto& f : failures) std::cout << "check failed: " << f << "\n";
  std::cout << (failures.empty() ? "replay checks passed" : "replay checks failed") << "\n";
  return failures.empty() ? 0 : 1;
}

int run_serve(const CommonOptions& common, std::optional<std::uint16_t> port, const std::string& log_path,
              const std::string& static_dir, const std::string& address) {
  auto config = resolve_config(common);
  if (port) config.server.port = *port;
  if (!log_path.empty()) config.server.log_path = log_path;
  if (!static_dir.empty()) config.server.static_dir = static_dir;

  auto deps = make_pipeline_deps(config);
  auto log = std::make_shared<TranscriptLog>(config.server.log_path,
                                             config.server.fsync ? FsyncPolicy::EveryRecord : FsyncPolicy::Never);
  auto service = std::make_shared<SessionService>(
      deps, log, ServiceOptions{config.server.max_sessions, config.server.session_time_limit_ms});
  const auto restored = service->restore();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service, HttpServerOptions{address, config.server.port, config.server.static_dir});
  server.start();
  std::cout << "restored " << restored << " sessions from " << config.server.log_path.string() << "\n"
            << "listening on http://" << address << ":" << server.port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "shutting down" << std::endl;
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Travel-agent dialogue engine"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* chat = app.add_subcommand("chat", "Interactive dialogue on stdin/stdout");
  add_common(chat, common);
  std::string chat_log;
  chat->add_option("--log-path", chat_log, "Append the transcript to this log");

  auto* sim = app.add_subcommand("simulate", "Run scripted personas against the mock backend");
  add_common(sim, common);
  std::string personas_path = std::string(TRAVEL_AGENT_DATA_DIR) + "/personas.json";
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::string sim_format = "table";
  std::string sim_log;
  sim->add_option("--personas", personas_path, "Persona file (JSON)");
  sim->add_option("-n", n, "Dialogues per persona")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Simulation seed");
  sim->add_option("--format", sim_format, "table or json")->check(CLI::IsMember({"table", "json"}));
  sim->add_option("--log-path", sim_log, "Append all transcripts to this log");

  auto* eval = app.add_subcommand("eval-breakdown", "Score breakdown detectors on a labeled corpus");
  add_common(eval, common);
  std::string corpus_path = std::string(TRAVEL_AGENT_DATA_DIR) + "/breakdown_corpus.jsonl";
  std::string eval_format = "table";
  eval->add_option("--corpus", corpus_path, "Labeled exchanges (JSON Lines)");
  eval->add_option("--format", eval_format, "table or json")->check(CLI::IsMember({"table", "json"}));

  auto* replay = app.add_subcommand("replay", "Rebuild a session from a transcript log");
  add_common(replay, common);
  std::string replay_log;
  std::string replay_id;
  replay->add_option("--log", replay_log, "Transcript log")->required();
  replay->add_option("--id", replay_id, "Session id")->required();

  auto* serve = app.add_subcommand("serve", "HTTP and WebSocket session service");
  add_common(serve, common);
  std::optional<std::uint16_t> port;
  std::string serve_log;
  std::string static_dir;
  std::string address = "127.0.0.1";
  serve->add_option("--port", port, "Listening port (0 picks a free one)");
  serve->add_option("--log-path", serve_log, "Transcript log");
  serve->add_option("--static-dir", static_dir, "Serve a static web client from this directory");
  serve->add_option("--address", address, "Listening address");

  auto* cfg = app.add_subcommand("config", "Configuration helpers");
  bool dump_defaults = false;
  cfg->add_flag("--dump-defaults", dump_defaults, "Print the built-in configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*chat) return run_chat(common, chat_log);
    if (*sim) return run_simulate(common, personas_path, n, seed, sim_format, sim_log);
    if (*eval) return run_eval(common, corpus_path, eval_format);
    if (*replay) return run_replay(common, replay_log, replay_id);
    if (*serve) return run_serve(common, port, serve_log, static_dir, address);
    if (*cfg) {
      if (!dump_defaults) {
        std::cerr << "config: nothing to do (try --dump-defaults)\n";
        return 2;
      }
      std::cout << config_to_json(default_app_config()).dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::CorruptLog ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
