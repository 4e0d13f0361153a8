#pragma once

#include <optional>
#include <string_view>

#include "json.hpp"

namespace clinnote {

// First JSON object embedded in free text: fenced ``` blocks are tried
// before a left-to-right scan for balanced braces.
std::optional<nlohmann::json> find_json_object(std::string_view text);

// Same, but accepts a top-level array as well as an object.
std::optional<nlohmann::json> find_json_value(std::string_view text);

}  // namespace clinnote
