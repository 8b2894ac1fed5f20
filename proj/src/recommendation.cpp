#include "travel/recommendation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "travel/error.hpp"
#include "travel/text.hpp"

namespace travel {

using nlohmann::json;

namespace {

const std::set<std::string> kSeasonTags = {"spring", "summer", "autumn", "winter", "any"};

std::string required_string(const json& j, const char* field, std::size_t line, bool allow_empty = false) {
  if (!j.contains(field) || !j[field].is_string()) throw Error(Errc::SchemaViolation, field, line);
  auto s = j[field].get<std::string>();
  if (!allow_empty && text::is_blank(s)) throw Error(Errc::SchemaViolation, field, line);
  return s;
}

std::set<std::string> string_set(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_array()) throw Error(Errc::SchemaViolation, field, line);
  std::set<std::string> out;
  for (const auto& v : j[field]) {
    if (!v.is_string() || text::is_blank(v.get<std::string>())) throw Error(Errc::SchemaViolation, field, line);
    out.insert(text::to_lower(text::trim(v.get<std::string>())));
  }
  return out;
}

bool term_matches(const std::set<std::string>& tags, SlotName slot, const SlotMap& slots) {
  auto it = slots.find(slot);
  if (it == slots.end() || is_open_preference(it->second.normalized)) return true;
  return tags.count(it->second.normalized) > 0;
}

std::vector<std::string> concrete_matches(const SpotRecord& spot, const SlotMap& slots) {
  std::vector<std::string> out;
  auto add = [&](SlotName name, const std::set<std::string>& tags, bool any_tag_matches) {
    auto it = slots.find(name);
    if (it == slots.end() || is_open_preference(it->second.normalized)) return;
    const auto& v = it->second.normalized;
    if (tags.count(v) > 0 || any_tag_matches) out.push_back(std::string(slot_label(name)) + "=" + v);
  };
  add(SlotName::TravelPurpose, spot.purposes, false);
  add(SlotName::Season, spot.seasons, spot.seasons.count("any") > 0);
  add(SlotName::Companions, spot.companions_fit, false);
  return out;
}

}  // namespace

std::vector<std::string> TravelPlan::spot_names() const {
  std::vector<std::string> names;
  names.reserve(items.size());
  for (const auto& item : items) names.push_back(item.spot.name);
  return names;
}

std::vector<SpotRecord> parse_spots(std::string_view content) {
  std::vector<SpotRecord> spots;
  std::set<std::string> names;
  std::set<std::string> ids;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::ParseError, "invalid JSON record", line_no);

    SpotRecord spot;
    spot.id = required_string(j, "id", line_no);
    spot.name = required_string(j, "name", line_no);
    spot.purposes = string_set(j, "purposes", line_no);
    spot.seasons = string_set(j, "seasons", line_no);
    spot.companions_fit = string_set(j, "companions_fit", line_no);
    spot.description = required_string(j, "description", line_no, true);
    spot.area = required_string(j, "area", line_no);
    if (!j.contains("visit_minutes") || !j["visit_minutes"].is_number_integer() ||
        j["visit_minutes"].get<long long>() <= 0) {
      throw Error(Errc::SchemaViolation, "visit_minutes", line_no);
    }
    spot.visit_minutes = j["visit_minutes"].get<int>();

    if (spot.seasons.empty()) throw Error(Errc::SchemaViolation, "seasons", line_no);
    for (const auto& s : spot.seasons) {
      if (kSeasonTags.count(s) == 0) throw Error(Errc::SchemaViolation, "seasons", line_no);
    }
    if (!names.insert(spot.name).second) throw Error(Errc::DuplicateSpot, spot.name, line_no);
    if (!ids.insert(spot.id).second) throw Error(Errc::DuplicateSpot, spot.id, line_no);
    spots.push_back(std::move(spot));
  }
  return spots;
}

std::vector<SpotRecord> load_spots(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot read spots file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spots(ss.str());
}

bool is_open_preference(std::string_view value) { return value == "any" || value == "unspecified"; }

double score_spot(const SpotRecord& spot, const SlotMap& slots, const RankingWeights& weights) {
  double score = 0.0;
  if (term_matches(spot.purposes, SlotName::TravelPurpose, slots)) score += weights.purpose;
  if (spot.seasons.count("any") > 0 || term_matches(spot.seasons, SlotName::Season, slots)) score += weights.season;
  if (term_matches(spot.companions_fit, SlotName::Companions, slots)) score += weights.companions;
  return score;
}

TravelPlan compose_plan(std::span<const SpotRecord> spots, const SlotMap& slots, std::size_t plan_size,
                        const RankingWeights& weights) {
  if (spots.empty()) throw Error(Errc::EmptyKnowledgeBase, "no spots loaded");
  std::vector<PlanItem> ranked;
  ranked.reserve(spots.size());
  for (const auto& spot : spots) {
    ranked.push_back(PlanItem{spot, score_spot(spot, slots, weights), concrete_matches(spot, slots)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const PlanItem& a, const PlanItem& b) {
    if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
    return a.spot.name < b.spot.name;
  });
  ranked.resize(std::min(std::max<std::size_t>(plan_size, 1), ranked.size()));

  TravelPlan plan;
  plan.items = std::move(ranked);
  std::vector<std::string> parts;
  for (const auto& item : plan.items) {
    parts.push_back(item.spot.name + " (" +
                    (item.matched.empty() ? std::string("general fit") : text::join(item.matched, ", ")) + ")");
  }
  plan.rationale = text::join(parts, "; ");
  return plan;
}

std::string plan_presentation_context(const TravelPlan& plan) {
  std::ostringstream out;
  for (std::size_t i = 0; i < plan.items.size(); ++i) {
    const auto& item = plan.items[i];
    out << (i + 1) << ". " << item.spot.name << " (" << item.spot.area << "): " << item.spot.description
        << " About " << item.spot.visit_minutes << " minutes. Matches: "
        << (item.matched.empty() ? std::string("general fit") : text::join(item.matched, ", ")) << ".";
    if (i + 1 < plan.items.size()) out << "\n";
  }
  return out.str();
}

}  // namespace travel
