#include "travel/transcript_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "travel/error.hpp"
#include "travel/json_codec.hpp"

namespace travel {

using nlohmann::json;

std::string encode_record(const TranscriptRecord& r) {
  json j{{"schema", r.schema},
         {"engine", r.engine},
         {"kind", r.kind == RecordKind::Turn ? "turn" : "abort"},
         {"session_id", r.session_id},
         {"seed", r.seed}};
  if (r.kind == RecordKind::Turn) j["turn"] = turn_to_json(r.turn);
  return j.dump();
}

TranscriptRecord decode_record(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::ParseError, "record is not a JSON object");
  TranscriptRecord r;
  try {
    r.schema = j.at("schema").get<int>();
    r.engine = j.at("engine").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "turn") {
      r.kind = RecordKind::Turn;
    } else if (kind == "abort") {
      r.kind = RecordKind::Abort;
    } else {
      throw Error(Errc::ParseError, "unknown record kind " + kind);
    }
    r.session_id = j.at("session_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if (r.schema != kLogSchemaVersion) throw Error(Errc::ParseError, "unsupported schema " + std::to_string(r.schema));
  if (r.kind == RecordKind::Turn) {
    if (!j.contains("turn")) throw Error(Errc::ParseError, "turn record without turn");
    r.turn = turn_from_json(j.at("turn"));
  }
  return r;
}

TranscriptLog::TranscriptLog(std::filesystem::path path, FsyncPolicy fsync) : path_(std::move(path)), fsync_(fsync) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(Errc::SinkUnavailable, path_.string() + ": " + std::strerror(errno));
}

TranscriptLog::~TranscriptLog() {
  if (fd_ >= 0) ::close(fd_);
}

void TranscriptLog::append(const TranscriptRecord& record) {
  std::string line = encode_record(record);
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::SinkUnavailable, path_.string() + ": " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (fsync_ == FsyncPolicy::EveryRecord && ::fsync(fd_) != 0) {
    throw Error(Errc::SinkUnavailable, path_.string() + ": fsync failed: " + std::strerror(errno));
  }
}

void persist_turn(TranscriptLog& log, const Session& session, const Turn& turn) {
  TranscriptRecord r;
  r.kind = RecordKind::Turn;
  r.session_id = session.id;
  r.seed = session.rng_seed;
  r.turn = turn;
  log.append(r);
}

void persist_abort(TranscriptLog& log, const Session& session) {
  TranscriptRecord r;
  r.kind = RecordKind::Abort;
  r.session_id = session.id;
  r.seed = session.rng_seed;
  log.append(r);
}

std::map<std::string, std::vector<std::pair<std::size_t, TranscriptRecord>>> read_log(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::SinkUnavailable, "cannot read " + path.string());
  std::map<std::string, std::vector<std::pair<std::size_t, TranscriptRecord>>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto record = decode_record(line);
      out[record.session_id].emplace_back(line_no, std::move(record));
    } catch (const Error& e) {
      throw Error(Errc::CorruptLog, e.detail(), line_no);
    }
  }
  return out;
}

namespace {

Session rebuild(const std::string& id, const std::vector<std::pair<std::size_t, TranscriptRecord>>& records,
                const ScenarioConfig& scenario) {
  if (records.empty()) throw Error(Errc::CorruptLog, "no records for session " + id);
  Session session = new_session(records.front().second.seed, id);
  for (const auto& [line, record] : records) {
    try {
      if (record.seed != session.rng_seed) throw Error(Errc::InvalidTurn, "seed changed within session");
      if (record.kind == RecordKind::Abort) {
        if (session.status != SessionStatus::Active) throw Error(Errc::SessionClosed, "abort of a closed session");
        session.status = SessionStatus::Aborted;
        continue;
      }
      if (record.turn.index != session.transcript.size()) {
        throw Error(Errc::IndexMismatch, "expected turn " + std::to_string(session.transcript.size()) + ", found " +
                                             std::to_string(record.turn.index));
      }
      session = apply_recorded_turn(std::move(session), record.turn, scenario);
    } catch (const Error& e) {
      if (e.code() == Errc::CorruptLog) throw;
      throw Error(Errc::CorruptLog, std::string(errc_name(e.code())) + ": " + e.detail(), line);
    }
  }
  return session;
}

}  // namespace

Session replay_transcript(const std::filesystem::path& path, const std::string& id, const ScenarioConfig& scenario) {
  auto log = read_log(path);
  auto it = log.find(id);
  if (it == log.end()) throw Error(Errc::CorruptLog, "no records for session " + id);
  return rebuild(id, it->second, scenario);
}

std::vector<Session> replay_all(const std::filesystem::path& path, const ScenarioConfig& scenario) {
  std::vector<Session> out;
  for (const auto& [id, records] : read_log(path)) out.push_back(rebuild(id, records, scenario));
  return out;
}

}  // namespace travel
