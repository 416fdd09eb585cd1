#pragma once

// Parser for the TOML subset used by run configs: [dotted.tables], bare keys,
// strings, integers, floats, booleans and (possibly multi-line) arrays of
// those. Inline tables, dates and multi-line strings are not supported.

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rgbtvg {

class TomlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, std::vector<TomlValue>> v;
  int line = 0;

  bool as_bool(const std::string& key) const;
  std::int64_t as_int(const std::string& key) const;
  // Integers are accepted where a float is expected.
  double as_double(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  const std::vector<TomlValue>& as_array(const std::string& key) const;
};

/// Flat view: "table.sub.key" -> value, plus every table header seen.
class TomlDocument {
 public:
  static TomlDocument parse(const std::string& text);

  const std::map<std::string, TomlValue>& values() const { return values_; }
  const std::set<std::string>& tables() const { return tables_; }
  const TomlValue* find(const std::string& key) const;

 private:
  std::map<std::string, TomlValue> values_;
  std::set<std::string> tables_;
};

std::string toml_quote(const std::string& s);
// Shortest round-trip text that still reads back as a float.
std::string toml_double(double v);

}  // namespace rgbtvg
