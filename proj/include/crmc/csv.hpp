#pragma once

#include <string>
#include <vector>

#include "crmc/dataset.hpp"

namespace crmc {

// Comma-separated, header row required, UTF-8, '.' decimal, no quoting.
struct CsvTable {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;  // row-major cells

  Eigen::Index num_rows() const { return static_cast<Eigen::Index>(rows.size()); }
  int column(const std::string& name) const;            // -1 when absent
  int require_column(const std::string& name) const;    // data_error when absent
};

CsvTable read_csv_file(const std::string& path);

// Strict numeric parse of one column; errors name the data row (1-based)
// and column.
Vec numeric_column(const CsvTable& table, const std::string& name);

// Cluster ids taken verbatim when the column is integral; otherwise distinct
// tokens are numbered by first appearance.
std::vector<std::int64_t> cluster_column(const CsvTable& table, const std::string& name);

}  // namespace crmc
