#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "travel/domain.hpp"
#include "travel/scenario.hpp"

namespace travel {

// One labeled exchange: prior turns, the customer utterance under test, and
// whether it should be flagged.
struct LabeledExchange {
  std::string id;
  std::vector<Turn> context;
  std::string candidate;
  bool breakdown = false;
  std::string exchange_class;  // e.g. "empty", "garbled", "cooperative"
};

// JSON Lines, one object per line:
//   {"id", "context": [{"speaker": "system"|"customer", "text"}], "candidate",
//    "label": "breakdown"|"ok", "class"}
// Throws CorpusParseError(line); an empty corpus is an error too.
std::vector<LabeledExchange> parse_corpus(const std::string& text);
std::vector<LabeledExchange> load_corpus(const std::filesystem::path& path);

struct ClassCount {
  std::size_t total = 0;
  std::size_t flagged = 0;
};

struct DetectorScore {
  DetectorId detector = DetectorId::Heuristic;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::map<std::string, ClassCount> by_class;

  // 1.0 when nothing was flagged.
  double precision() const;
  // Undefined without breakdown labels.
  std::optional<double> recall() const;
};

// Scores the heuristic detector and, when the configuration enables it, the
// prompted judge and the combined verdict.
std::vector<DetectorScore> eval_breakdown(const std::vector<LabeledExchange>& corpus, const EngineConfig& config,
                                          const std::shared_ptr<CompletionBackend>& backend);

nlohmann::json eval_to_json(const std::vector<DetectorScore>& scores);
std::string eval_table(const std::vector<DetectorScore>& scores);

}  // namespace travel
