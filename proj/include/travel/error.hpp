#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace travel {

enum class Errc {
  IndexMismatch,
  SessionClosed,
  InvalidTurn,
  LowerConfidenceOverwrite,
  EmptySlotValue,
  TerminalPhase,
  NotReady,
  PhaseMismatch,
  EmptyAfterCleaning,
  ParseError,
  DuplicateSpot,
  SchemaViolation,
  EmptyKnowledgeBase,
  StoreFull,
  UnknownSession,
  Conflict,
  SinkUnavailable,
  CorruptLog,
  CorpusParseError,
  ConfigError,
};

std::string_view errc_name(Errc code);

// Every failure the engine surfaces is a travel::Error carrying one of the
// codes above. `line` is set for positional errors (1-based).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail, std::optional<std::size_t> line = std::nullopt);

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Errc code_;
  std::string detail_;
  std::optional<std::size_t> line_;
};

}  // namespace travel
