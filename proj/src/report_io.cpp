#include "reuse/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <Eigen/Core>

#include "reuse/error.hpp"

namespace reuse {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void dump(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        dump(it.value(), out, indent + 2);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump(j[i], out, indent + 2);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::string dump_canonical(const json& j) {
  std::string out;
  dump(j, out, 0);
  out += "\n";
  return out;
}

json analytic_value(double v) {
  return {{"value", v}, {"provenance", "analytic"}};
}

json mc_value(double v, double se, long n, std::uint64_t seed) {
  return {{"value", v}, {"stderr", se}, {"n_samples", n}, {"seed", seed}, {"provenance", "mc"}};
}

json mc_value(const RiskEstimate& e) { return mc_value(e.value, e.stderr_, e.n_samples, e.seed); }

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw Error(ErrorCode::InvalidArgument, "table '" + key + "': row width does not match the header");
  }
  rows.push_back(std::move(row));
}

namespace {

json cell_json(const Cell& c) {
  return std::visit(
      [](const auto& v) -> json {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::monostate>) {
          return nullptr;
        } else {
          return v;
        }
      },
      c);
}

}  // namespace

json Table::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json row = json::array();
    for (const auto& c : r) row.push_back(cell_json(c));
    rows_j.push_back(row);
  }
  return {{"columns", columns}, {"rows", rows_j}};
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string format_cell(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<V, double>) {
          return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf"));
        } else if constexpr (std::is_same_v<V, long long>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<V, bool>) {
          return v ? "true" : "false";
        } else {
          return v;
        }
      },
      c);
}

void write_csv(const Table& table, const std::string& path) {
  std::string text;
  for (std::size_t i = 0; i < table.columns.size(); ++i) text += (i ? "," : "") + csv_escape(table.columns[i]);
  text += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + csv_escape(format_cell(row[i]));
    text += "\r\n";
  }
  write_file(path, text);
}

json ExperimentReport::to_json() const {
  json tables_j = json::object();
  for (const auto& t : tables) {
    if (t.in_json) tables_j[t.key] = t.to_json();
  }
  return {{"config", config}, {"results", results}, {"seeds", seeds}, {"tables", tables_j}};
}

std::vector<std::string> write_report(const ExperimentReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
  std::vector<std::string> files;
  if (!report.empty()) {
    std::set<std::string> keys;
    for (const auto& t : report.tables) {
      if (!keys.insert(t.key).second) throw Error(ErrorCode::InvalidArgument, "duplicate table key '" + t.key + "'");
    }
    write_file(fs::path(dir) / "report.json", dump_canonical(report.to_json()));
    files.emplace_back("report.json");
    if (!report.tables.empty()) {
      fs::create_directories(fs::path(dir) / "tables", ec);
      if (ec) throw Error(ErrorCode::IoError, "cannot create tables directory: " + ec.message());
    }
    for (const auto& t : report.tables) {
      write_csv(t, (fs::path(dir) / "tables" / (t.key + ".csv")).string());
      files.push_back("tables/" + t.key + ".csv");
    }
  }
  json manifest = {{"files", files},
                   {"seeds", report.seeds},
                   {"preset", report.config.value("preset", std::string())},
                   {"root_seed", report.config.value("seed", std::uint64_t{0})},
                   {"versions",
                    {{"reuse", "0.1.0"},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__}}}};
  write_file(fs::path(dir) / "manifest.json", dump_canonical(manifest));
  files.emplace_back("manifest.json");
  return files;
}

}  // namespace reuse
