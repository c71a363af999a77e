#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "reuse/montecarlo.hpp"

namespace reuse {

using json = nlohmann::json;

// Sorted keys (json objects are std::map backed), two-space indent, finite
// floats with 17 significant digits, non-finite floats as null.
std::string dump_canonical(const json& j);

// {"value", "provenance": "analytic"} and the Monte Carlo analogue with
// stderr, sample count and seed.
json analytic_value(double v);
json mc_value(double v, double se, long n, std::uint64_t seed);
json mc_value(const RiskEstimate& e);

using Cell = std::variant<std::monostate, double, long long, std::string, bool>;

struct Table {
  std::string key;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  bool in_json = true;  // false: CSV only (bulk sample dumps)

  void add_row(std::vector<Cell> row);
  json to_json() const;
};

std::string csv_escape(const std::string& field);
std::string format_cell(const Cell& c);
// RFC 4180: header row, CRLF line ends, quoted fields where needed.
void write_csv(const Table& table, const std::string& path);

struct ExperimentReport {
  json config = json::object();
  json results = json::object();
  json seeds = json::object();
  std::vector<Table> tables;

  bool empty() const { return results.empty() && tables.empty(); }
  json to_json() const;
};

// Writes report.json, tables/<key>.csv and manifest.json under dir; an empty
// report gets the manifest only. Returns the written paths relative to dir.
std::vector<std::string> write_report(const ExperimentReport& report, const std::string& dir);

}  // namespace reuse
