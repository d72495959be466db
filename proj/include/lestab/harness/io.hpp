#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lestab/error.hpp"

namespace lestab::harness {

inline constexpr int kSchemaVersion = 1;

/// Round-trip decimal form (17 significant digits).
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvTable {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw Error(ErrorKind::io, "column '" + name + "' not found");
  }

  std::vector<double> values(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  return out;
}

/// Writes `# {json}`, then the column names, then one row per line.
inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  auto out = open_output(path);
  out << "# " << table.header.dump() << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  bool have_columns = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(1);
      try {
        t.header = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": bad JSON header: " + e.what());
      }
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    if (!have_columns) {
      while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
      have_columns = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": '" + cell + "' is not a number");
      }
      row.push_back(v);
    }
    if (row.size() != t.columns.size()) {
      throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.columns.size()) + " fields");
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_columns) throw Error(ErrorKind::io, "'" + path.string() + "' has no column header");
  return t;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

/// Appends one metadata line carrying the schema version.
inline void append_jsonl(const std::filesystem::path& path, nlohmann::json j) {
  j["schema_version"] = kSchemaVersion;
  auto out = open_output(path, std::ios::app);
  out << j.dump() << '\n';
}

}  // namespace lestab::harness
