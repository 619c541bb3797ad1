#include "cycconf/kvconfig.hpp"

#include <algorithm>
#include <sstream>

#include "cycconf/util.hpp"

namespace cycconf {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError("config parse error at line " + std::to_string(lineno) +
                      ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw DataError("config parse error at line " + std::to_string(lineno) +
                      ": empty key");
    cfg.set(key, value);
  }
  return cfg;
}

KvConfig KvConfig::load_file(const std::string& path) {
  return parse(read_file(path));
}

void KvConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const {
  return get(key).has_value();
}

std::optional<std::string> KvConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    double d = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': not a number: " + *v);
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    long long i = std::stoll(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("");
    return i;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': not an integer: " + *v);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw DataError("config key '" + key + "': not a boolean: " + *v);
}

std::vector<int64_t> KvConfig::get_int_list(
    const std::string& key, const std::vector<int64_t>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<int64_t> out;
  std::string item;
  std::istringstream in(*v);
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(),
                              [](char c) { return c == ' ' || c == '\t'; }),
               item.end());
    if (item.empty()) continue;
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': not an integer list: " + *v);
    }
  }
  return out;
}

void KvConfig::merge_from(const KvConfig& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace cycconf
