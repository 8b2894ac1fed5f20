#include <doctest.h>

#include <future>
#include <sys/wait.h>

#include "support.hpp"
#include "travel/error.hpp"
#include "travel/session_service.hpp"

using namespace travel;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected travel::Error");
  return Errc::ConfigError;
}

struct Fixture {
  testing::TempDir dir;
  std::shared_ptr<TranscriptLog> log = std::make_shared<TranscriptLog>(dir / "t.jsonl");

  SessionService service(PipelineDeps deps = testing::mock_deps(), ServiceOptions options = {}) {
    return SessionService(std::move(deps), log, options);
  }
};

}  // namespace

TEST_CASE("create, post, get and delete") {
  Fixture f;
  auto svc = f.service();
  const auto created = svc.create_session();
  CHECK(created.phase == Phase::Greeting);
  CHECK(created.opening.index == 0);
  CHECK(svc.active_sessions() == 1);

  const auto posted = svc.post_turn(created.id, "Hello, my name is Mei.");
  CHECK(posted.customer.index == 1);
  CHECK(posted.reply.index == 2);
  CHECK(posted.phase == Phase::IceBreak);
  CHECK(posted.slots.at(SlotName::CustomerName).normalized == "Mei");

  // Snapshot length is one plus two per post.
  CHECK(svc.get_session(created.id).transcript.size() == 3);
  svc.post_turn(created.id, "It is my first time here.");
  svc.post_turn(created.id, "I came by train.");
  CHECK(svc.get_session(created.id).transcript.size() == 7);

  const auto aborted = svc.abort_session(created.id);
  CHECK(aborted.status == SessionStatus::Aborted);
  CHECK(svc.active_sessions() == 0);
  CHECK(code_of([&] { svc.post_turn(created.id, "hello?"); }) == Errc::SessionClosed);
  CHECK(code_of([&] { svc.abort_session(created.id); }) == Errc::SessionClosed);
  CHECK(code_of([&] { svc.get_session("missing"); }) == Errc::UnknownSession);
  CHECK(code_of([&] { svc.post_turn("missing", "x"); }) == Errc::UnknownSession);
}

TEST_CASE("completed sessions reject further turns") {
  Fixture f;
  auto svc = f.service();
  const auto id = svc.create_session().id;
  PostResult last;
  for (std::size_t i = 0; i < 40 && svc.get_session(id).status == SessionStatus::Active; ++i) {
    last = svc.post_turn(id, "");
  }
  CHECK(last.status == SessionStatus::Completed);
  CHECK(last.phase == Phase::Done);
  CHECK(code_of([&] { svc.post_turn(id, "hi"); }) == Errc::SessionClosed);
}

TEST_CASE("concurrent posts to one session conflict") {
  Fixture f;
  auto deps = testing::mock_deps();
  auto svc = f.service(deps);
  const auto id = svc.create_session().id;
  // Swap in a slow backend after the opening.
  SessionService slow(
      [&] {
        auto d = deps;
        d.backend = std::make_shared<testing::StubBackend>("OK", std::chrono::milliseconds(400));
        return d;
      }(),
      f.log);
  const auto sid = slow.create_session().id;
  auto first = std::async(std::launch::async, [&] { return slow.post_turn(sid, "Hi, I'm Ken."); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  CHECK(code_of([&] { slow.post_turn(sid, "again"); }) == Errc::Conflict);
  CHECK(code_of([&] { slow.abort_session(sid); }) == Errc::Conflict);
  // Other sessions are unaffected.
  CHECK_NOTHROW(svc.post_turn(id, "Hello"));
  CHECK(first.get().customer.index == 1);
  CHECK_NOTHROW(slow.post_turn(sid, "again"));
}

TEST_CASE("session limit") {
  Fixture f;
  auto svc = f.service(testing::mock_deps(), ServiceOptions{2, 0});
  const auto a = svc.create_session().id;
  svc.create_session();
  CHECK(code_of([&] { svc.create_session(); }) == Errc::StoreFull);
  svc.abort_session(a);
  CHECK_NOTHROW(svc.create_session());
}

TEST_CASE("time limit aborts on the next post") {
  Fixture f;
  auto now = std::make_shared<std::int64_t>(1000);
  auto deps = testing::mock_deps();
  deps.clock = [now] { return *now; };
  auto svc = f.service(deps, ServiceOptions{10, 5000});
  const auto id = svc.create_session().id;
  *now += 4000;
  CHECK_NOTHROW(svc.post_turn(id, "Hi"));
  *now += 2000;
  CHECK(code_of([&] { svc.post_turn(id, "still there?"); }) == Errc::SessionClosed);
  CHECK(svc.get_session(id).status == SessionStatus::Aborted);
  CHECK(replay_transcript(f.log->path(), id, default_scenario()).status == SessionStatus::Aborted);
}

TEST_CASE("events reach subscribers in order") {
  Fixture f;
  auto svc = f.service();
  const auto id = svc.create_session().id;
  std::vector<nlohmann::json> seen;
  const auto token = svc.events().subscribe(id, [&](const nlohmann::json& e) { seen.push_back(e); });
  CHECK(svc.events().subscriber_count(id) == 1);
  svc.post_turn(id, "Hi, I'm Mei.");
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].at("type") == "turn");
  CHECK(seen[0].at("turn").at("index") == 1);
  CHECK(seen[1].at("turn").at("index") == 2);
  CHECK(seen[1].at("phase") == "IceBreak");
  CHECK(seen[1].at("slots").contains("customer_name"));
  svc.abort_session(id);
  REQUIRE(seen.size() == 3);
  CHECK(seen[2] == nlohmann::json{{"type", "closed"}, {"session_id", id}, {"phase", "IceBreak"}, {"status", "Aborted"}});
  svc.events().unsubscribe(id, token);
  CHECK(svc.events().subscriber_count(id) == 0);
}

TEST_CASE("restore rebuilds every logged session") {
  Fixture f;
  std::string a, b;
  Session a_before;
  {
    auto svc = f.service();
    a = svc.create_session().id;
    b = svc.create_session().id;
    svc.post_turn(a, "Hi, I'm Mei.");
    svc.abort_session(b);
    a_before = svc.get_session(a);
  }
  auto svc = f.service();
  CHECK(svc.restore() == 2);
  CHECK(svc.get_session(a) == a_before);
  CHECK(svc.get_session(b).status == SessionStatus::Aborted);
  CHECK(svc.active_sessions() == 1);
  CHECK_NOTHROW(svc.post_turn(a, "It's my first visit."));
}

TEST_CASE("a crash between the customer turn and the reply is repaired on restore") {
  Fixture f;
  std::string id;
  {
    auto svc = f.service();
    id = svc.create_session().id;
    svc.post_turn(id, "Hi, I'm Mei.");
  }
  const pid_t child = fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    auto svc = f.service();
    svc.restore();
    svc.after_persist_hook = [](const Session&, const Turn& t) {
      if (t.speaker == Speaker::Customer) _exit(0);
    };
    svc.post_turn(id, "It's my first time in Kyoto.");
    _exit(1);  // not reached
  }
  int status = 0;
  waitpid(child, &status, 0);
  REQUIRE(WIFEXITED(status));
  REQUIRE(WEXITSTATUS(status) == 0);

  const auto partial = replay_transcript(f.log->path(), id, default_scenario());
  CHECK(partial.transcript.size() == 4);
  CHECK(awaiting_reply(partial));

  auto svc = f.service();
  svc.restore();
  const auto repaired = svc.get_session(id);
  CHECK(repaired.transcript.size() == 5);
  CHECK(repaired.transcript.back().speaker == Speaker::System);
  CHECK(replay_transcript(f.log->path(), id, default_scenario()) == repaired);
  CHECK_NOTHROW(svc.post_turn(id, "I came by train."));
}

TEST_CASE("service needs a complete dependency set") {
  testing::TempDir dir;
  auto deps = testing::mock_deps();
  deps.backend.reset();
  CHECK(code_of([&] { SessionService(deps, std::make_shared<TranscriptLog>(dir / "t.jsonl")); }) ==
        Errc::ConfigError);
}
