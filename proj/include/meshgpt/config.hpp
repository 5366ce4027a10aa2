#pragma once
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshgpt {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// `key = value` lines under [codec] / [gpt] / [data] / [sampler] sections.
// Every key is declared in a fixed schema with a typed default; unknown keys
// and malformed values are errors. Values are normalized on entry, so the
// snapshot() text is canonical and byte-stable.
class Config {
 public:
  static Config defaults();
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin);

  int64_t get_int(const std::string& section, const std::string& key) const;
  double get_float(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key) const;
  std::vector<int> get_int_list(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_str_list(const std::string& section,
                                        const std::string& key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  // Full config in schema order; embedded into checkpoints.
  std::string snapshot() const;
  std::string snapshot_section(const std::string& section) const;

  // Keys whose values differ between two configs within one section,
  // formatted "key: ours vs theirs".
  static std::vector<std::string> diff_section(const Config& a, const Config& b,
                                               const std::string& section);

  // One "section.key = default  # doc" line per schema entry.
  static std::string describe();

 private:
  std::map<std::pair<std::string, std::string>, std::string> values_;
  const std::string& raw(const std::string& section, const std::string& key) const;
};

}  // namespace meshgpt
