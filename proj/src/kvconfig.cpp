#include "compat_reason/kvconfig.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace compat_reason {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::string section;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(where + ": empty key");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (cfg.values_.count(full)) throw ParseError(where + ": duplicate key '" + full + "'");
    cfg.values_[full] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
  const std::string* v = lookup(key);
  if (!v) return std::nullopt;
  return *v;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  const std::string* v = lookup(key);
  if (!v) return std::nullopt;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || !std::isfinite(out)) {
    throw ParseError(origin_ + ": key '" + key + "' expects a number, got '" + *v + "'");
  }
  return out;
}

std::optional<long long> KeyValueConfig::get_int(const std::string& key) const {
  const std::string* v = lookup(key);
  if (!v) return std::nullopt;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ParseError(origin_ + ": key '" + key + "' expects an integer, got '" + *v + "'");
  }
  return out;
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
  const std::string* v = lookup(key);
  if (!v) return std::nullopt;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ParseError(origin_ + ": key '" + key + "' expects true or false, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& allowed, std::string_view prefix) const {
  for (const auto& [k, v] : values_) {
    if (!prefix.empty() && k.rfind(prefix, 0) != 0) continue;
    if (!allowed.count(k)) throw ParseError(origin_ + ": unknown key '" + k + "'");
  }
}

}  // namespace compat_reason
