#pragma once

#include <set>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"

namespace wildfire {

/// Strict reader over one JSON object. Every key read is recorded, and
/// finish() rejects keys that were never read. Errors are ConfigError
/// carrying the dotted field path.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& object, std::string path = {})
      : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(where("") + " must be a JSON object", path_);
  }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) throw ConfigError("missing required field '" + field(key) + "'", field(key));
    return convert<T>(*it, key);
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return fallback;
    return convert<T>(*it, key);
  }

  bool has(const std::string& key) const { return object_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) throw ConfigError("missing required field '" + field(key) + "'", field(key));
    return *it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field '" + field(key) + "'", field(key));
    }
  }

 private:
  template <typename T>
  T convert(const nlohmann::json& value, const std::string& key) const {
    // reject silently-narrowing numeric conversions such as 1.5 -> int
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!value.is_number_integer()) throw ConfigError("field '" + field(key) + "' must be an integer", field(key));
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw ConfigError("field '" + field(key) + "' must be a number", field(key));
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw ConfigError("field '" + field(key) + "' must be a boolean", field(key));
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!value.is_string()) throw ConfigError("field '" + field(key) + "' must be a string", field(key));
    }
    try {
      return value.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("field '" + field(key) + "' has the wrong type", field(key));
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? "document" + key : path_ + key; }

  const nlohmann::json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace wildfire
