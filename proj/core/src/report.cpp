#include "ssmsec/report.hpp"

#include "ssmsec/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef SSMSEC_VERSION
#define SSMSEC_VERSION "0.1.0"
#endif

namespace ssmsec {

using nlohmann::json;

void Table::add(std::vector<std::string> row) {
  require(row.size() == columns.size(), ErrorKind::Shape, "table '" + name + "' row has the wrong width");
  rows.push_back(std::move(row));
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace

std::string Table::csv() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << csv_field(columns[i]);
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_field(r[i]);
    os << '\n';
  }
  return os.str();
}

std::string Table::render() const {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) width[i] = columns[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::ostringstream os;
  auto line = [&] {
    os << '+';
    for (auto w : width) os << std::string(w + 2, '-') << '+';
    os << '\n';
  };
  auto row = [&](const std::vector<std::string>& r) {
    os << '|';
    for (std::size_t i = 0; i < r.size(); ++i) os << ' ' << r[i] << std::string(width[i] - r[i].size(), ' ') << " |";
    os << '\n';
  };
  os << name << '\n';
  line();
  row(columns);
  line();
  for (const auto& r : rows) row(r);
  line();
  return os.str();
}

Table& ExperimentReport::table(const std::string& name) {
  for (auto& t : tables)
    if (t.name == name) return t;
  tables.push_back(Table{name, {}, {}});
  return tables.back();
}

const Table* ExperimentReport::find_table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

double ExperimentReport::value(const std::string& key) const {
  const auto it = summary.find(key);
  require(it != summary.end(), ErrorKind::InvalidArgument, "report " + id + " has no summary value " + key);
  return it->second;
}

namespace {

json body(const ExperimentReport& r) {
  json tables = json::array();
  for (const auto& t : r.tables) tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", t.rows}});
  json summary = json::object();
  for (const auto& [k, v] : r.summary) summary[k] = std::isfinite(v) ? json(v) : json(nullptr);
  return {{"id", r.id},         {"title", r.title},   {"notes", r.notes}, {"flags", r.flags},
          {"summary", summary}, {"tables", tables},   {"config", r.config}};
}

}  // namespace

std::string ExperimentReport::body_json() const { return body(*this).dump(2); }

std::string ExperimentReport::to_json() const {
  json j = body(*this);
  j["provenance"] = {{"config_hash", provenance.config_hash},
                     {"code_version", provenance.code_version},
                     {"started", provenance.started},
                     {"finished", provenance.finished}};
  return j.dump(2);
}

std::vector<std::string> ExperimentReport::write(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create output directory " + dir + ": " + ec.message());
  std::vector<std::string> paths;
  auto put = [&](const std::string& file, const std::string& text) {
    const std::string path = (fs::path(dir) / file).string();
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
    out << text;
    paths.push_back(path);
  };
  put(id + "_report.json", to_json() + "\n");
  for (const auto& t : tables) put(id + "_" + t.name + ".csv", t.csv());
  return paths;
}

std::string ExperimentReport::render() const {
  std::ostringstream os;
  os << "== " << id << ": " << title << " ==\n";
  for (const auto& n : notes) os << "note: " << n << '\n';
  for (const auto& f : flags) os << "flag: " << f << '\n';
  os << '\n';
  for (const auto& t : tables) os << t.render() << '\n';
  if (!summary.empty()) {
    Table s{"summary", {"key", "value"}, {}};
    for (const auto& [k, v] : summary) s.add({k, fmt(v, 6)});
    os << s.render();
  }
  return os.str();
}

ExperimentReport report_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("report is not valid JSON: ") + e.what());
  }
  ExperimentReport r;
  try {
    r.id = j.at("id").get<std::string>();
    r.title = j.value("title", "");
    r.notes = j.value("notes", std::vector<std::string>{});
    r.flags = j.value("flags", std::vector<std::string>{});
    r.config = j.value("config", "");
    const json summary = j.value("summary", json::object());
    for (const auto& [k, v] : summary.items())
      r.summary[k] = v.is_null() ? std::nan("") : v.get<double>();
    for (const auto& t : j.value("tables", json::array()))
      r.tables.push_back(Table{t.at("name").get<std::string>(), t.at("columns").get<std::vector<std::string>>(),
                               t.at("rows").get<std::vector<std::vector<std::string>>>()});
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      r.provenance = {p.value("config_hash", ""), p.value("code_version", ""), p.value("started", ""),
                      p.value("finished", "")};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("report JSON has an unexpected layout: ") + e.what());
  }
  return r;
}

std::string render_report_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open report " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return report_from_json(os.str()).render();
}

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string code_version() { return SSMSEC_VERSION; }

std::string fmt(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_ci(double lo, double hi, int precision) { return "[" + fmt(lo, precision) + ", " + fmt(hi, precision) + "]"; }

}  // namespace ssmsec
