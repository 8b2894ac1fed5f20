#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "travel/domain.hpp"

namespace travel {

struct SpotRecord {
  std::string id;
  std::string name;
  std::set<std::string> purposes;
  std::set<std::string> seasons;  // subset of {spring, summer, autumn, winter, any}
  std::set<std::string> companions_fit;
  std::string description;
  std::string area;
  int visit_minutes = 0;

  friend bool operator==(const SpotRecord&, const SpotRecord&) = default;
};

struct RankingWeights {
  double purpose = 2.0;
  double season = 1.5;
  double companions = 1.0;
};

struct PlanItem {
  SpotRecord spot;
  double rank_score = 0.0;
  std::vector<std::string> matched;  // e.g. "purpose=history"
};

struct TravelPlan {
  std::vector<PlanItem> items;  // rank_score descending, ties by name ascending
  std::string rationale;

  std::vector<std::string> spot_names() const;
};

inline constexpr std::size_t kDefaultPlanSize = 3;

// Spots file: JSON Lines, one SpotRecord object per line. Blank lines are
// ignored; line numbers in errors are 1-based file lines.
std::vector<SpotRecord> parse_spots(std::string_view content);
std::vector<SpotRecord> load_spots(const std::filesystem::path& path);

// Slot values that carry no preference ("any", "unspecified") and absent
// slots earn the full weight of their term.
bool is_open_preference(std::string_view value);

double score_spot(const SpotRecord& spot, const SlotMap& slots, const RankingWeights& weights = {});

// Top `plan_size` spots by score; equal scores are ordered by name. Throws
// EmptyKnowledgeBase when `spots` is empty.
TravelPlan compose_plan(std::span<const SpotRecord> spots, const SlotMap& slots,
                        std::size_t plan_size = kDefaultPlanSize, const RankingWeights& weights = {});

// Structured block injected into the recommendation prompt's {plan} slot.
std::string plan_presentation_context(const TravelPlan& plan);

}  // namespace travel
