#include "travel/breakdown_eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "travel/error.hpp"
#include "travel/text.hpp"

namespace travel {

using nlohmann::json;

std::vector<LabeledExchange> parse_corpus(const std::string& text) {
  std::vector<LabeledExchange> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::CorpusParseError, "not a JSON object", line_no);
    LabeledExchange e;
    try {
      e.id = j.at("id").get<std::string>();
      e.candidate = j.at("candidate").get<std::string>();
      e.exchange_class = j.value("class", "");
      const auto label = j.at("label").get<std::string>();
      if (label == "breakdown") {
        e.breakdown = true;
      } else if (label != "ok") {
        throw Error(Errc::CorpusParseError, "label must be breakdown or ok", line_no);
      }
      for (const auto& c : j.value("context", json::array())) {
        Turn t;
        t.index = e.context.size();
        const auto speaker = parse_speaker(c.at("speaker").get<std::string>());
        if (!speaker) throw Error(Errc::CorpusParseError, "bad speaker", line_no);
        t.speaker = *speaker;
        t.text = c.at("text").get<std::string>();
        t.phase = Phase::Question;
        e.context.push_back(std::move(t));
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::CorpusParseError, ex.what(), line_no);
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(Errc::CorpusParseError, "corpus has no exchanges");
  return out;
}

std::vector<LabeledExchange> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::CorpusParseError, "cannot read corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

double DetectorScore::precision() const {
  if (tp + fp == 0) return 1.0;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> DetectorScore::recall() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

namespace {

void tally(DetectorScore& score, const LabeledExchange& e, bool flagged) {
  if (e.breakdown) {
    ++(flagged ? score.tp : score.fn);
  } else {
    ++(flagged ? score.fp : score.tn);
  }
  auto& c = score.by_class[e.exchange_class];
  ++c.total;
  if (flagged) ++c.flagged;
}

}  // namespace

std::vector<DetectorScore> eval_breakdown(const std::vector<LabeledExchange>& corpus, const EngineConfig& config,
                                          const std::shared_ptr<CompletionBackend>& backend) {
  DetectorScore heuristic;
  heuristic.detector = DetectorId::Heuristic;
  DetectorScore prompted;
  prompted.detector = DetectorId::Prompted;
  DetectorScore combined;
  combined.detector = DetectorId::Combined;
  const bool use_prompted = config.detector.use_prompted && backend != nullptr;
  for (const auto& e : corpus) {
    const std::size_t k = std::min(config.detector.context_turns, e.context.size());
    const std::span<const Turn> context(e.context.data() + (e.context.size() - k), k);
    const auto h = detect_breakdown_heuristic(context, e.candidate, config.detector, config.lexicons);
    tally(heuristic, e, h.is_breakdown);
    if (use_prompted) {
      const auto p = detect_breakdown_prompted(context, e.candidate, backend, config.backend, config.judge);
      tally(prompted, e, p.is_breakdown);
      tally(combined, e, combine_verdicts(h, p).is_breakdown);
    }
  }
  if (!use_prompted) return {heuristic};
  return {heuristic, prompted, combined};
}

json eval_to_json(const std::vector<DetectorScore>& scores) {
  json out = json::array();
  for (const auto& s : scores) {
    json classes = json::object();
    for (const auto& [name, c] : s.by_class) classes[name] = {{"total", c.total}, {"flagged", c.flagged}};
    const auto recall = s.recall();
    out.push_back({{"detector", detector_name(s.detector)},
                   {"tp", s.tp},
                   {"fp", s.fp},
                   {"tn", s.tn},
                   {"fn", s.fn},
                   {"precision", s.precision()},
                   {"recall", recall ? json(*recall) : json("n/a")},
                   {"classes", classes}});
  }
  return out;
}

std::string eval_table(const std::vector<DetectorScore>& scores) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %4s %4s %4s %4s %9s %9s\n", "detector", "tp", "fp", "tn", "fn", "precision",
                "recall");
  out << buf;
  for (const auto& s : scores) {
    const auto recall = s.recall();
    char r[16];
    if (recall) {
      std::snprintf(r, sizeof r, "%.4f", *recall);
    } else {
      std::snprintf(r, sizeof r, "n/a");
    }
    const auto name = detector_name(s.detector);
    std::snprintf(buf, sizeof buf, "%-10.*s %4zu %4zu %4zu %4zu %9.4f %9s\n", static_cast<int>(name.size()),
                  name.data(), s.tp, s.fp, s.tn, s.fn, s.precision(), r);
    out << buf;
  }
  for (const auto& s : scores) {
    const auto name = detector_name(s.detector);
    out << "\n" << name << " by class\n";
    for (const auto& [cls, c] : s.by_class) {
      std::snprintf(buf, sizeof buf, "  %-20s %3zu/%zu flagged\n", cls.c_str(), c.flagged, c.total);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace travel
