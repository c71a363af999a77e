#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace reuse {

// Draft-07 subset: type, enum, properties, required, additionalProperties
// (boolean), items, minItems, maxItems, minimum, maximum, exclusiveMinimum,
// exclusiveMaximum and local "#/definitions/..." references. Each error is
// "<json pointer>: <message>".
std::vector<std::string> schema_errors(const nlohmann::json& schema, const nlohmann::json& instance);

}  // namespace reuse
