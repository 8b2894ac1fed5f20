#include "travel/session_service.hpp"

#include <random>

#include "travel/error.hpp"
#include "travel/json_codec.hpp"

namespace travel {

using nlohmann::json;

std::uint64_t EventHub::subscribe(const std::string& session_id, Subscriber subscriber) {
  std::lock_guard lock(mutex_);
  const auto token = next_token_++;
  subscribers_[session_id].emplace(token, std::move(subscriber));
  return token;
}

void EventHub::unsubscribe(const std::string& session_id, std::uint64_t token) {
  std::lock_guard lock(mutex_);
  auto it = subscribers_.find(session_id);
  if (it == subscribers_.end()) return;
  it->second.erase(token);
  if (it->second.empty()) subscribers_.erase(it);
}

void EventHub::publish(const std::string& session_id, const json& event) {
  std::vector<Subscriber> targets;
  {
    std::lock_guard lock(mutex_);
    auto it = subscribers_.find(session_id);
    if (it == subscribers_.end()) return;
    for (const auto& [_, s] : it->second) targets.push_back(s);
  }
  for (const auto& s : targets) s(event);
}

std::size_t EventHub::subscriber_count(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = subscribers_.find(session_id);
  return it == subscribers_.end() ? 0 : it->second.size();
}

json turn_event(const Session& session, const Turn& turn) {
  return json{{"type", "turn"},
              {"session_id", session.id},
              {"turn", turn_to_json(turn)},
              {"phase", phase_name(session.phase)},
              {"status", status_name(session.status)},
              {"slots", slots_to_json(session.slots)}};
}

json closed_event(const Session& session) {
  return json{{"type", "closed"},
              {"session_id", session.id},
              {"phase", phase_name(session.phase)},
              {"status", status_name(session.status)}};
}

namespace {

std::uint64_t fresh_seed() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return rng();
}

}  // namespace

SessionService::SessionService(PipelineDeps deps, std::shared_ptr<TranscriptLog> log, ServiceOptions options)
    : deps_(std::move(deps)), log_(std::move(log)), options_(options) {
  if (!deps_.config || !deps_.backend || !log_) throw Error(Errc::ConfigError, "service needs config, backend and log");
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::shared_lock lock(store_mutex_);
  auto it = store_.find(id);
  if (it == store_.end()) throw Error(Errc::UnknownSession, "unknown session " + id);
  return it->second;
}

void SessionService::persist(Entry& entry, const Session& session, const Turn& turn) {
  persist_turn(*log_, session, turn);
  if (after_persist_hook) after_persist_hook(session, turn);
  {
    std::lock_guard lock(entry.snapshot_mutex);
    entry.snapshot = session;
  }
  events_.publish(session.id, turn_event(session, turn));
}

std::size_t SessionService::active_sessions() const {
  std::shared_lock lock(store_mutex_);
  std::size_t n = 0;
  for (const auto& [_, entry] : store_) {
    std::lock_guard snap(entry->snapshot_mutex);
    if (entry->snapshot.status == SessionStatus::Active) ++n;
  }
  return n;
}

std::size_t SessionService::restore() {
  std::size_t restored = 0;
  for (auto& session : replay_all(log_->path(), deps_.config->scenario)) {
    auto entry = std::make_shared<Entry>();
    entry->opened_ms = session.transcript.front().timestamp_ms;
    entry->snapshot = session;
    {
      std::unique_lock lock(store_mutex_);
      store_[session.id] = entry;
    }
    ++restored;
    if (session.status == SessionStatus::Active && awaiting_reply(session)) {
      std::lock_guard writer(entry->writer);
      TurnBudget budget(deps_.config->backend.deadline_ms);
      auto result = respond(std::move(session), deps_, budget);
      persist(*entry, result.session, result.reply);
    }
  }
  return restored;
}

CreateResult SessionService::create_session() {
  // Capacity is checked and reserved under one lock; the opening utterance is
  // generated outside it so that a slow backend does not serialize creates.
  {
    std::lock_guard lock(create_mutex_);
    if (active_sessions() + reserved_ >= options_.max_sessions) {
      throw Error(Errc::StoreFull, "session limit of " + std::to_string(options_.max_sessions) + " reached");
    }
    ++reserved_;
  }
  struct Release {
    std::mutex& m;
    std::size_t& n;
    ~Release() {
      std::lock_guard lock(m);
      --n;
    }
  } release{create_mutex_, reserved_};

  auto entry = std::make_shared<Entry>();
  std::lock_guard writer(entry->writer);
  auto opened = open_session(new_session(fresh_seed()), deps_);
  entry->opened_ms = opened.reply.timestamp_ms;
  entry->snapshot = opened.session;
  persist_turn(*log_, opened.session, opened.reply);
  {
    std::unique_lock lock(store_mutex_);
    store_[opened.session.id] = entry;
  }
  if (after_persist_hook) after_persist_hook(opened.session, opened.reply);
  return {opened.session.id, opened.reply, opened.session.phase};
}

void SessionService::expire_if_over_limit(Entry& entry, Session& session) {
  if (options_.session_time_limit_ms <= 0) return;
  if (deps_.clock() - entry.opened_ms <= options_.session_time_limit_ms) return;
  persist_abort(*log_, session);
  session.status = SessionStatus::Aborted;
  {
    std::lock_guard lock(entry.snapshot_mutex);
    entry.snapshot = session;
  }
  events_.publish(session.id, closed_event(session));
  throw Error(Errc::SessionClosed, "session " + session.id + " exceeded its time limit");
}

PostResult SessionService::post_turn(const std::string& id, std::string_view text) {
  auto entry = find(id);
  std::unique_lock writer(entry->writer, std::try_to_lock);
  if (!writer.owns_lock()) throw Error(Errc::Conflict, "a turn for session " + id + " is already in progress");

  Session session;
  {
    std::lock_guard lock(entry->snapshot_mutex);
    session = entry->snapshot;
  }
  if (session.status != SessionStatus::Active) {
    throw Error(Errc::SessionClosed, "session " + id + " is " + std::string(status_name(session.status)));
  }
  expire_if_over_limit(*entry, session);

  TurnBudget budget(deps_.config->backend.deadline_ms);
  session = accept_customer_turn(std::move(session), text, deps_, budget);
  Turn customer = session.transcript.back();
  persist(*entry, session, customer);

  auto result = respond(std::move(session), deps_, budget);
  persist(*entry, result.session, result.reply);
  if (result.session.status != SessionStatus::Active) events_.publish(id, closed_event(result.session));
  return {std::move(customer), std::move(result.reply), result.session.phase, result.session.status,
          std::move(result.session.slots)};
}

Session SessionService::get_session(const std::string& id) const {
  auto entry = find(id);
  std::lock_guard lock(entry->snapshot_mutex);
  return entry->snapshot;
}

Session SessionService::abort_session(const std::string& id) {
  auto entry = find(id);
  std::unique_lock writer(entry->writer, std::try_to_lock);
  if (!writer.owns_lock()) throw Error(Errc::Conflict, "a turn for session " + id + " is in progress");
  Session session;
  {
    std::lock_guard lock(entry->snapshot_mutex);
    session = entry->snapshot;
  }
  if (session.status != SessionStatus::Active) {
    throw Error(Errc::SessionClosed, "session " + id + " is " + std::string(status_name(session.status)));
  }
  persist_abort(*log_, session);
  session.status = SessionStatus::Aborted;
  {
    std::lock_guard lock(entry->snapshot_mutex);
    entry->snapshot = session;
  }
  events_.publish(id, closed_event(session));
  return session;
}

}  // namespace travel
