#pragma once

// Key-value configuration files:
//
//   # comment
//   seed = 3
//   [train]
//   alpha = 1.0        -> key "train.alpha"
//
// Keys are unique; a repeated key is an error. Typed getters consume keys so
// that callers can reject whatever is left over as unknown.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "compat_reason/types.hpp"

namespace compat_reason {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  /// Keys never read through a getter.
  std::vector<std::string> unused_keys() const;
  /// Throws ParseError naming the first key outside `allowed` (or under `prefix`, if given).
  void reject_unknown(const std::set<std::string>& allowed, std::string_view prefix = "") const;

 private:
  const std::string* lookup(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace compat_reason
