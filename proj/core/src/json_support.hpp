#pragma once

#include <json.hpp>

#include "piesn/dynamics.hpp"

namespace piesn {

nlohmann::json system_to_json(const SystemModel& m);
SystemModel system_from_json(const nlohmann::json& j);

}  // namespace piesn
