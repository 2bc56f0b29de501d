#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aif {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "section.key" -> raw value view of an INI-style file. Keys outside
// any section are stored without a prefix.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    KeyValues kv;
    for (const auto& [name, node] : tree) {
      if (node.empty()) {
        kv.set(name, node.data());
        continue;
      }
      for (const auto& [key, leaf] : node) kv.set(name + "." + key, leaf.data());
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  // Applies a "section.key=value" override.
  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw ConfigError("override must look like key=value: " + std::string(assignment));
    set(std::string(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
  }

  // Reads a value and marks the key as consumed.
  template <typename T>
  void read(const std::string& key, T& out) const {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    used_.insert(key);
    out = convert<T>(key, it->second);
  }

  // Every key must have been consumed by some reader.
  void reject_unknown() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) throw ConfigError("unknown config key: " + key);
  }

 private:
  template <typename T>
  static T convert(const std::string& key, const std::string& raw) {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "on") return true;
      if (raw == "false" || raw == "0" || raw == "off") return false;
      throw ConfigError("expected boolean for " + key + ": " + raw);
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing");
        return static_cast<T>(v);
      } catch (const std::exception&) {
        throw ConfigError("expected number for " + key + ": " + raw);
      }
    } else {
      T v{};
      const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc{} || ptr != raw.data() + raw.size())
        throw ConfigError("expected integer for " + key + ": " + raw);
      return v;
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace aif

