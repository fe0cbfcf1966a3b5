#include "talkinghead/io/csv.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "talkinghead/error.hpp"

namespace th::io {

void write_csv(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv: " + path);
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  if (!table.header.empty()) out << '\n';
  out << std::setprecision(17);
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read csv: " + path);
  Table table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      bool numeric = true;
      try {
        for (const auto& c : cells) (void)std::stod(c);
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) {
        table.header = cells;
        continue;
      }
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  Table t;
  t.header = header;
  t.rows.resize(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    t.rows[r].resize(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.rows[r][c] = m(r, c);
  }
  write_csv(path, t);
}

}  // namespace th::io
