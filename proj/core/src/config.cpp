#include "ssmsec/config.hpp"

#include "ssmsec/common.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ssmsec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  require(errno == 0 && end && *end == '\0' && !text.empty(), ErrorKind::Config,
          "value for '" + key + "' is not a number: " + text);
  return v;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(to_double("list", item));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
    require(errno == 0 && end && *end == '\0' && item[0] != '-', ErrorKind::Config, "bad seed: " + item);
    out.push_back(v);
  }
  require(!out.empty(), ErrorKind::Config, "seed list is empty");
  return out;
}

double ExperimentConfig::get(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : to_double(key, it->second);
}

int ExperimentConfig::get_int(const std::string& key, int fallback) const {
  const double v = get(key, fallback);
  require(v == static_cast<double>(static_cast<int>(v)), ErrorKind::Config, "value for '" + key + "' must be an integer");
  return static_cast<int>(v);
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::Config, "value for '" + key + "' is not a boolean: " + v);
}

std::string ExperimentConfig::get_str(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::vector<double> ExperimentConfig::get_list(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : parse_double_list(it->second);
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<int> out;
  for (double v : parse_double_list(it->second)) {
    require(v == static_cast<double>(static_cast<int>(v)), ErrorKind::Config, "list '" + key + "' must hold integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "id") {
    id = value;
  } else if (key == "seeds") {
    seeds = parse_seed_list(value);
  } else if (key == "out") {
    out_dir = value;
  } else if (key == "threads") {
    threads = static_cast<int>(to_double(key, value));
  } else {
    values[key] = value;
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "id=" << id << '\n' << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << '\n';
  for (const auto& [k, v] : values) os << k << '=' << v << '\n';
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ExperimentConfig::validate() const {
  static const std::vector<std::string> ids{"e1", "e2", "e3", "e4", "e5", "mval", "m1", "m3", "m4"};
  require(std::find(ids.begin(), ids.end(), id) != ids.end(), ErrorKind::Config, "unknown experiment id: " + id);
  require(!seeds.empty(), ErrorKind::Config, "seed list is empty");
  require(threads >= 1, ErrorKind::Config, "threads must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), ErrorKind::Config, "line " + std::to_string(lineno) + ": empty key");
    cfg.set(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

}  // namespace ssmsec
