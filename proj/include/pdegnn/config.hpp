#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdegnn {

/// Flat key=value configuration.
///
/// Grammar, one entry per line:
///   line    := blank | comment | entry
///   comment := ws* '#' any*
///   entry   := ws* key ws* '=' ws* value ws*
///   key     := [A-Za-z0-9_.-]+
/// Values run to the end of the line (no inline comments) with surrounding
/// whitespace trimmed. A later entry for the same key replaces the earlier.
class KeyValues {
 public:
  /// Throws std::invalid_argument with the 1-based line number on bad syntax.
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::string& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  /// Later entries of `other` win.
  void merge(const KeyValues& other);

  /// Canonical text: keys sorted, "key=value\n".
  std::string to_text() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

double parse_double(std::string_view key, std::string_view value);
std::int64_t parse_int(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
/// Comma-separated integers, e.g. "2,4,8".
std::vector<std::int64_t> parse_int_list(std::string_view key, std::string_view value);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace pdegnn
