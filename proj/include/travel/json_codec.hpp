#pragma once

#include <json.hpp>

#include "travel/domain.hpp"
#include "travel/recommendation.hpp"

namespace travel {

// JSON mapping for domain values. Decoders throw travel::Error(ParseError)
// on missing or mistyped fields.
nlohmann::json slot_value_to_json(const SlotValue& v);
SlotValue slot_value_from_json(const nlohmann::json& j);

nlohmann::json slots_to_json(const SlotMap& slots);
SlotMap slots_from_json(const nlohmann::json& j);

nlohmann::json verdict_to_json(const BreakdownVerdict& v);
BreakdownVerdict verdict_from_json(const nlohmann::json& j);

nlohmann::json turn_to_json(const Turn& t);
Turn turn_from_json(const nlohmann::json& j);

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

nlohmann::json plan_to_json(const TravelPlan& plan);

}  // namespace travel
