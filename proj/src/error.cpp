#include "travel/error.hpp"

namespace travel {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::IndexMismatch: return "IndexMismatch";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::InvalidTurn: return "InvalidTurn";
    case Errc::LowerConfidenceOverwrite: return "LowerConfidenceOverwrite";
    case Errc::EmptySlotValue: return "EmptySlotValue";
    case Errc::TerminalPhase: return "TerminalPhase";
    case Errc::NotReady: return "NotReady";
    case Errc::PhaseMismatch: return "PhaseMismatch";
    case Errc::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case Errc::ParseError: return "ParseError";
    case Errc::DuplicateSpot: return "DuplicateSpot";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::EmptyKnowledgeBase: return "EmptyKnowledgeBase";
    case Errc::StoreFull: return "StoreFull";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::Conflict: return "Conflict";
    case Errc::SinkUnavailable: return "SinkUnavailable";
    case Errc::CorruptLog: return "CorruptLog";
    case Errc::CorpusParseError: return "CorpusParseError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {
std::string format_message(Errc code, const std::string& detail, std::optional<std::size_t> line) {
  std::string msg(errc_name(code));
  if (line) msg += " (line " + std::to_string(*line) + ")";
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}
}  // namespace

Error::Error(Errc code, const std::string& detail, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, detail, line)),
      code_(code),
      detail_(detail),
      line_(line) {}

}  // namespace travel
