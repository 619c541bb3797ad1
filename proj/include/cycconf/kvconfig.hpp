#ifndef CYCCONF_KVCONFIG_HPP_
#define CYCCONF_KVCONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cycconf {

// Flat key=value configuration. One `key = value` pair per line, `#` starts
// a comment, blank lines ignored. Insertion order is preserved so a config
// serializes back deterministically.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text);
  static KvConfig load_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated integer list.
  std::vector<int64_t> get_int_list(const std::string& key,
                                    const std::vector<int64_t>& fallback) const;

  // Later entries win; used for CLI flag overrides on top of a file.
  void merge_from(const KvConfig& other);

  std::string serialize() const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace cycconf

#endif  // CYCCONF_KVCONFIG_HPP_
