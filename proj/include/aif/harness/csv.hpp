#pragma once

// Minimal reader for the unquoted numeric CSV files the harness writes.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif::harness {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool has(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw CsvError("missing column: " + name);
  }

  std::vector<std::string> text(const std::string& name) const {
    const auto i = index(name);
    std::vector<std::string> out;
    for (const auto& r : rows) out.push_back(r[i]);
    return out;
  }

  std::vector<double> numbers(const std::string& name) const {
    const auto i = index(name);
    std::vector<double> out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stod(rows[r][i], &pos));
        if (pos != rows[r][i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw CsvError("non-numeric value in column " + name + " at row " + std::to_string(r + 1));
      }
    }
    return out;
  }
};

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw CsvError("empty CSV");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw CsvError("row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                     " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.rows.empty()) throw CsvError("CSV has no data rows");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot read " + path);
  return parse_csv(in);
}

}  // namespace aif::harness
