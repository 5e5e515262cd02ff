#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "amkalign/error.hpp"
#include "amkalign/matrix.hpp"

namespace amkalign {

/// Shortest form that still carries 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file, then renames it over path.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidArgument("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

/// Numeric CSV without a header. Blank lines are skipped; rows must share a width.
inline Matrix parse_csv_matrix(const std::string& text, const std::string& source = "csv") {
  std::vector<double> values;
  std::size_t width = 0, rows = 0, line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": not a number: \"" + cell + "\"");
      }
      values.push_back(v);
      ++count;
    }
    if (!line.empty() && line.back() == ',') {
      throw ParseError(source + ":" + std::to_string(line_no) + ": trailing comma");
    }
    if (rows == 0) {
      width = count;
    } else if (count != width) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(source + ": no data rows");
  Matrix m(rows, width);
  std::copy(values.begin(), values.end(), m.data().begin());
  return m;
}

inline Matrix read_csv_matrix(const std::string& path) {
  return parse_csv_matrix(read_file(path), path);
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + '\n';
}

inline std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<std::string> cells;
    for (std::size_t j = 0; j < m.cols(); ++j) cells.push_back(format_double(m(i, j)));
    out += csv_row(cells);
  }
  return out;
}

}  // namespace amkalign
