#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ggt {

/// Minimal strict CSV reading: comma-separated, no quoting, one record per
/// line. Good enough for the flat schemas this project uses.
struct CsvFile {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row numbers reported to users are 1-based data rows
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvFile read_csv(const std::string& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  CsvFile csv;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, header row required");
  csv.header = split_csv_line(line);
  if (csv.header != expected_header) {
    std::ostringstream want;
    for (std::size_t i = 0; i < expected_header.size(); ++i) want << (i ? "," : "") << expected_header[i];
    throw std::runtime_error(path + ": header must be `" + want.str() + "`, got `" + line + "`");
  }
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != expected_header.size()) {
      throw std::runtime_error(path + " row " + std::to_string(row_no) + ": expected " +
                               std::to_string(expected_header.size()) + " columns, got " +
                               std::to_string(fields.size()));
    }
    csv.rows.push_back(std::move(fields));
  }
  return csv;
}

inline double parse_double_field(const std::string& s, const std::string& path, std::size_t row,
                                 const std::string& column) {
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::runtime_error(path + " row " + std::to_string(row) + ": field " + column + " is not numeric: `" + s +
                             "`");
  }
  return v;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace ggt
