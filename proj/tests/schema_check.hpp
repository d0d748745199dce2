#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace schema {

/// Validates `doc` against a JSON Schema subset: type, enum, minimum,
/// maximum, required, properties, additionalProperties (boolean), items,
/// allOf, oneOf and local `#/...` references. Returns one message per
/// violation, each prefixed with its JSON pointer.
std::vector<std::string> validate(const nlohmann::json& doc, const nlohmann::json& schema);

}  // namespace schema
