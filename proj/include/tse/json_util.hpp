#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "tse/error.hpp"

namespace tse {

// Reads fields of one JSON object into a config struct, keeping defaults for
// absent keys and rejecting keys nobody asked for.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& obj, std::string section)
      : obj_(obj), section_(std::move(section)) {
    require(obj_.is_object(), Errc::kConfig, "config section '" + section_ + "' must be an object");
  }

  template <typename T>
  ConfigReader& get(const char* key, T& dst) {
    seen_.insert(key);
    if (auto it = obj_.find(key); it != obj_.end()) {
      try {
        dst = it->template get<T>();
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::kConfig, "config key '" + section_ + "." + key + "': " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(Errc::kConfig, "unknown config key '" + section_ + "." + key + "'");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace tse
