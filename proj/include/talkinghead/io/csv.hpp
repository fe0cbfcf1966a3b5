#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace th::io {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const Table& table);
Table read_csv(const std::string& path);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

}  // namespace th::io
