#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/matrix.hpp"

namespace fpfm {

struct CsvError : std::runtime_error {
  explicit CsvError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace csv {

// 17 significant digits round-trips doubles exactly.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  return out;
}

inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw CsvError("trailing characters in numeric field: '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw CsvError("not a number: '" + s + "'");
  } catch (const std::out_of_range&) {
    throw CsvError("number out of range: '" + s + "'");
  }
}

}  // namespace csv

// Sample matrices as CSV with header x0,x1,...
inline void write_samples_csv(const std::string& path, const DenseMatrix& samples) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot open for writing: " + path);
  for (std::size_t j = 0; j < samples.cols(); ++j) {
    if (j) out << ',';
    out << 'x' << j;
  }
  out << '\n';
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    for (std::size_t j = 0; j < samples.cols(); ++j) {
      if (j) out << ',';
      out << csv::format_double(samples(i, j));
    }
    out << '\n';
  }
  if (!out) throw CsvError("write failed: " + path);
}

inline DenseMatrix read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw CsvError("empty file: " + path);
  const std::size_t cols = csv::split_row(line).size();
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = csv::split_row(line);
    if (fields.size() != cols)
      throw CsvError(path + ": row " + std::to_string(rows + 2) + " has " +
                     std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
    for (const std::string& f : fields) values.push_back(csv::parse_double(f));
    ++rows;
  }
  DenseMatrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

}  // namespace fpfm
