#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecmkit/error.hpp"

namespace ecmkit {

using json = nlohmann::json;

// Strict view over one JSON object: every key must be consumed unless the
// reader is lenient, and type mismatches are reported with the document path.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path, bool lenient) : obj_(obj), path_(std::move(path)), lenient_(lenient) {
    if (!obj_.is_object()) throw schema_error(path_ + " must be an object");
  }

  ObjectReader child(const std::string& key) const {
    consumed_.insert(key);
    return ObjectReader(at(key), path_ + "." + key, lenient_);
  }

  std::optional<ObjectReader> optional_child(const std::string& key) const {
    consumed_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return std::nullopt;
    return ObjectReader(obj_.at(key), path_ + "." + key, lenient_);
  }

  const json& raw(const std::string& key) const {
    consumed_.insert(key);
    return at(key);
  }

  const json* optional_raw(const std::string& key) const {
    consumed_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return nullptr;
    return &obj_.at(key);
  }

  double number(const std::string& key) const { return as_number(raw(key), path_ + "." + key); }

  std::optional<double> optional_number(const std::string& key) const {
    const json* v = optional_raw(key);
    if (!v) return std::nullopt;
    return as_number(*v, path_ + "." + key);
  }

  std::int64_t integer(const std::string& key) const { return as_integer(raw(key), path_ + "." + key); }

  std::optional<std::int64_t> optional_integer(const std::string& key) const {
    const json* v = optional_raw(key);
    if (!v) return std::nullopt;
    return as_integer(*v, path_ + "." + key);
  }

  bool boolean(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_boolean()) throw schema_error(path_ + "." + key + " must be a boolean");
    return v.get<bool>();
  }

  std::optional<bool> optional_boolean(const std::string& key) const {
    const json* v = optional_raw(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) throw schema_error(path_ + "." + key + " must be a boolean");
    return v->get<bool>();
  }

  std::string string(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw schema_error(path_ + "." + key + " must be a string");
    return v.get<std::string>();
  }

  std::string optional_string(const std::string& key, std::string fallback = {}) const {
    const json* v = optional_raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw schema_error(path_ + "." + key + " must be a string");
    return v->get<std::string>();
  }

  std::map<std::string, double> number_map(const std::string& key) const {
    std::map<std::string, double> out;
    const json* v = optional_raw(key);
    if (!v) return out;
    if (!v->is_object()) throw schema_error(path_ + "." + key + " must be an object of numbers");
    for (const auto& [k, val] : v->items()) out[k] = as_number(val, path_ + "." + key + "." + k);
    return out;
  }

  const std::string& path() const { return path_; }

  // Call after all expected keys were read.
  void finish() const {
    if (lenient_) return;
    std::vector<std::string> unknown;
    for (const auto& [k, v] : obj_.items()) {
      if (!consumed_.contains(k) && k != "comment") unknown.push_back(k);
    }
    if (!unknown.empty()) {
      std::string msg = path_ + " has unknown key(s):";
      for (const auto& k : unknown) msg += " " + k;
      throw schema_error(msg);
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw schema_error(path + " must be a number");
    return v.get<double>();
  }

  static std::int64_t as_integer(const json& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
    }
    throw schema_error(path + " must be an integer");
  }

 private:
  const json& at(const std::string& key) const {
    if (!obj_.contains(key)) throw schema_error(path_ + "." + key + " is missing");
    return obj_.at(key);
  }

  const json& obj_;
  std::string path_;
  bool lenient_;
  mutable std::set<std::string> consumed_;
};

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw schema_error(origin + ": " + e.what());
  }
}

}  // namespace ecmkit
