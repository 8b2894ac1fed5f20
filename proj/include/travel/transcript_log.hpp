#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "travel/domain.hpp"
#include "travel/scenario.hpp"

namespace travel {

inline constexpr int kLogSchemaVersion = 1;
inline constexpr const char* kEngineVersion = "travel-agent/1.0";

enum class RecordKind { Turn, Abort };

// One line of the transcript log.
struct TranscriptRecord {
  RecordKind kind = RecordKind::Turn;
  std::string session_id;
  std::uint64_t seed = 0;
  Turn turn;  // unused for Abort records
  std::string engine = kEngineVersion;
  int schema = kLogSchemaVersion;

  friend bool operator==(const TranscriptRecord&, const TranscriptRecord&) = default;
};

std::string encode_record(const TranscriptRecord& record);
// Throws ParseError.
TranscriptRecord decode_record(const std::string& line);

enum class FsyncPolicy { Never, EveryRecord };

// Append-only JSON Lines sink. Each record is written with a single write()
// on an O_APPEND descriptor, so a line is never interleaved with another.
class TranscriptLog {
 public:
  // Throws SinkUnavailable when the file cannot be opened for appending.
  explicit TranscriptLog(std::filesystem::path path, FsyncPolicy fsync = FsyncPolicy::Never);
  ~TranscriptLog();
  TranscriptLog(const TranscriptLog&) = delete;
  TranscriptLog& operator=(const TranscriptLog&) = delete;

  // Throws SinkUnavailable when the write fails.
  void append(const TranscriptRecord& record);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  FsyncPolicy fsync_;
  int fd_ = -1;
  std::mutex mutex_;
};

void persist_turn(TranscriptLog& log, const Session& session, const Turn& turn);
void persist_abort(TranscriptLog& log, const Session& session);

// Records grouped by session id, in file order. Throws CorruptLog(line) on
// undecodable lines and SinkUnavailable when the file cannot be read.
std::map<std::string, std::vector<std::pair<std::size_t, TranscriptRecord>>> read_log(
    const std::filesystem::path& path);

// Rebuilds a session from its records. A trailing customer turn without a
// reply is accepted. Throws CorruptLog(line) on gaps, duplicates, records
// that the state machine rejects, or when the id has no records.
Session replay_transcript(const std::filesystem::path& path, const std::string& id,
                          const ScenarioConfig& scenario);
std::vector<Session> replay_all(const std::filesystem::path& path, const ScenarioConfig& scenario);

}  // namespace travel
