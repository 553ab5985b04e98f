#include "marlrr/format.hpp"

#include <fmt/format.h>

#include <json.hpp>

namespace marlrr {

std::string decimal(double value) {
  if (value == 0.0) return "0";  // folds -0
  return fmt::format("{:.9g}", value);
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace marlrr
