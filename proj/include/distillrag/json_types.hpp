#pragma once

#include <json.hpp>

namespace distillrag {
using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;
}  // namespace distillrag
