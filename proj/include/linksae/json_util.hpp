#pragma once

#include "linksae/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

namespace linksae {

// Unknown keys are errors: a typo in a hyperparameter name must not be
// silently ignored.
inline void require_known_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                               std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace linksae
