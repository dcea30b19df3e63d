#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ssmsec {

inline const std::vector<std::uint64_t> kDefaultSeeds{42, 123, 456};

// Flat key-value configuration. Text format: one `key = value` per line, `#`
// starts a comment, lists are comma separated. The keys `id`, `seeds`, `out`
// and `threads` fill the typed fields; everything else lands in `values`.
struct ExperimentConfig {
  std::string id;
  std::vector<std::uint64_t> seeds = kDefaultSeeds;
  std::string out_dir;
  int threads = 1;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  double get(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  void set(const std::string& key, const std::string& value);

  // Sorted key=value lines (output directory and thread count excluded).
  std::string canonical() const;
  std::uint64_t hash() const;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace ssmsec
