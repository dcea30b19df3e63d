#pragma once

#include "ssmsec/config.hpp"

#include <deque>
#include <map>
#include <string>
#include <vector>

namespace ssmsec {

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string csv() const;
  // Aligned plain-text rendering with a title line.
  std::string render() const;
};

struct Provenance {
  std::string config_hash;
  std::string code_version;
  std::string started;
  std::string finished;
};

struct ExperimentReport {
  std::string id;
  std::string title;
  std::vector<std::string> notes;  // desk-scale substitutions and other caveats
  std::vector<std::string> flags;  // e.g. "inapplicable:..."
  std::deque<Table> tables;  // deque so references from table() stay valid
  std::map<std::string, double> summary;
  std::string config;  // canonical config text
  Provenance provenance;

  Table& table(const std::string& name);
  const Table* find_table(const std::string& name) const;
  double value(const std::string& key) const;  // throws if absent

  // Timestamps live only in the provenance block, so the body is reproducible.
  std::string body_json() const;
  std::string to_json() const;
  // Writes <id>_report.json and one <id>_<table>.csv per table; returns the written paths.
  std::vector<std::string> write(const std::string& dir) const;
  std::string render() const;
};

ExperimentReport report_from_json(const std::string& json_text);
std::string render_report_file(const std::string& path);

std::string now_iso8601();
std::string code_version();

// Fixed-precision number formatting used in tables.
std::string fmt(double v, int precision = 4);
std::string fmt_ci(double lo, double hi, int precision = 3);

}  // namespace ssmsec
