#pragma once

#include <string>

#include "planpaint/error.hpp"

namespace planpaint {

// Task settings shared by environments, language templates, datasets and the
// evaluation drivers. The grid settings are: one object/one goal, multi
// object/one goal, and the partially observable two-object setting where a
// visible reference hints at a hidden target.
enum class Setting { k1O1G, kMO1G, kPMO2G, kStack, kRearrange };

inline const char* to_string(Setting s) {
  switch (s) {
    case Setting::k1O1G: return "1O1G";
    case Setting::kMO1G: return "MO1G";
    case Setting::kPMO2G: return "P-MO2G";
    case Setting::kStack: return "STACK";
    case Setting::kRearrange: return "REARRANGE";
  }
  return "?";
}

inline Setting setting_from_string(const std::string& s) {
  if (s == "1O1G") return Setting::k1O1G;
  if (s == "MO1G") return Setting::kMO1G;
  if (s == "P-MO2G" || s == "PMO2G") return Setting::kPMO2G;
  if (s == "STACK") return Setting::kStack;
  if (s == "REARRANGE") return Setting::kRearrange;
  throw Error("unknown setting '" + s + "'");
}

inline bool is_blocks_setting(Setting s) {
  return s == Setting::kStack || s == Setting::kRearrange;
}

}  // namespace planpaint
