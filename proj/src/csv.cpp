#include "crmc/csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <unordered_map>

#include "crmc/errors.hpp"

namespace crmc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    const size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  for (auto& cell : out) {
    const size_t a = cell.find_first_not_of(" \t\r");
    const size_t b = cell.find_last_not_of(" \t\r");
    cell = a == std::string::npos ? std::string() : cell.substr(a, b - a + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) return false;
  *out = v;
  return true;
}

bool parse_int64(const std::string& s, std::int64_t* out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) return false;
  *out = v;
  return true;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return static_cast<int>(k);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int k = column(name);
  if (k < 0) throw data_error("missing column '" + name + "'");
  return k;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty file '" + path + "'");
  table.names = split_line(line);
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    auto cells = split_line(line);
    if (cells.size() != table.names.size())
      throw data_error("row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(table.names.size()));
    table.rows.push_back(std::move(cells));
  }
  if (table.rows.empty()) throw data_error("no data rows in '" + path + "'");
  return table;
}

Vec numeric_column(const CsvTable& table, const std::string& name) {
  const int col = table.require_column(name);
  Vec out(table.num_rows());
  for (Eigen::Index r = 0; r < table.num_rows(); ++r) {
    double v;
    if (!parse_double(table.rows[static_cast<size_t>(r)][static_cast<size_t>(col)], &v))
      throw data_error("non-numeric value '" +
                       table.rows[static_cast<size_t>(r)][static_cast<size_t>(col)] +
                       "' at row " + std::to_string(r + 1) + ", column '" + name + "'");
    if (!std::isfinite(v))
      throw data_error("non-finite value at row " + std::to_string(r + 1) + ", column '" +
                       name + "'");
    out(r) = v;
  }
  return out;
}

std::vector<std::int64_t> cluster_column(const CsvTable& table, const std::string& name) {
  const int col = table.require_column(name);
  std::vector<std::int64_t> out(static_cast<size_t>(table.num_rows()));
  bool all_int = true;
  for (const auto& row : table.rows) {
    std::int64_t v;
    if (!parse_int64(row[static_cast<size_t>(col)], &v)) {
      all_int = false;
      break;
    }
  }
  if (all_int) {
    for (size_t r = 0; r < out.size(); ++r)
      parse_int64(table.rows[r][static_cast<size_t>(col)], &out[r]);
    return out;
  }
  std::unordered_map<std::string, std::int64_t> ids;
  for (size_t r = 0; r < out.size(); ++r) {
    const auto& token = table.rows[r][static_cast<size_t>(col)];
    auto [it, inserted] = ids.try_emplace(token, static_cast<std::int64_t>(ids.size()));
    out[r] = it->second;
  }
  return out;
}

}  // namespace crmc
