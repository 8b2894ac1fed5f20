#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "travel/domain.hpp"
#include "travel/scenario.hpp"
#include "travel/transcript_log.hpp"

namespace travel {

// Fan-out of persisted turn events to stream subscribers, keyed by session.
class EventHub {
 public:
  using Subscriber = std::function<void(const nlohmann::json&)>;

  std::uint64_t subscribe(const std::string& session_id, Subscriber subscriber);
  void unsubscribe(const std::string& session_id, std::uint64_t token);
  void publish(const std::string& session_id, const nlohmann::json& event);
  std::size_t subscriber_count(const std::string& session_id) const;

 private:
  mutable std::mutex mutex_;
  std::uint64_t next_token_ = 1;
  std::map<std::string, std::map<std::uint64_t, Subscriber>> subscribers_;
};

// {"type": "turn", "session_id", "turn", "phase", "status", "slots"}
nlohmann::json turn_event(const Session& session, const Turn& turn);
// {"type": "closed", "session_id", "phase", "status"}
nlohmann::json closed_event(const Session& session);

struct ServiceOptions {
  std::size_t max_sessions = 256;          // concurrently active sessions
  std::int64_t session_time_limit_ms = 0;  // 0 = no limit
};

struct CreateResult {
  std::string id;
  Turn opening;
  Phase phase = Phase::Greeting;
};

struct PostResult {
  Turn customer;
  Turn reply;
  Phase phase = Phase::Greeting;
  SessionStatus status = SessionStatus::Active;
  SlotMap slots;
};

class SessionService {
 public:
  SessionService(PipelineDeps deps, std::shared_ptr<TranscriptLog> log, ServiceOptions options = {});

  // Loads every session in the log. Sessions whose last persisted turn is an
  // unanswered customer turn get their reply generated and persisted now.
  // Returns the number of sessions restored. Throws CorruptLog.
  std::size_t restore();

  // Throws StoreFull.
  CreateResult create_session();
  // Throws UnknownSession, SessionClosed, or Conflict when another post to the
  // same session is in progress.
  PostResult post_turn(const std::string& id, std::string_view text);
  // Throws UnknownSession.
  Session get_session(const std::string& id) const;
  // Throws UnknownSession, SessionClosed, Conflict.
  Session abort_session(const std::string& id);

  std::size_t active_sessions() const;
  EventHub& events() { return events_; }
  const PipelineDeps& deps() const { return deps_; }

  // Test seam: runs after each turn record is written, before the service
  // continues.
  std::function<void(const Session&, const Turn&)> after_persist_hook;

 private:
  struct Entry {
    std::mutex writer;
    mutable std::mutex snapshot_mutex;
    Session snapshot;
    std::int64_t opened_ms = 0;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void persist(Entry& entry, const Session& session, const Turn& turn);
  void expire_if_over_limit(Entry& entry, Session& session);

  PipelineDeps deps_;
  std::shared_ptr<TranscriptLog> log_;
  ServiceOptions options_;
  EventHub events_;
  mutable std::shared_mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> store_;
  std::mutex create_mutex_;
  std::size_t reserved_ = 0;  // creates in progress, guarded by create_mutex_
};

}  // namespace travel
