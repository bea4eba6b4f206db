#include "elearn/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "elearn/errors.hpp"

namespace elearn {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& path, int line, int col) {
  double v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(path + ": line " + std::to_string(line) + ", column " +
                    std::to_string(col) + ": cannot parse '" + s + "' as a number");
  if (!std::isfinite(v))
    throw DataError(path + ": line " + std::to_string(line) + ", column " +
                    std::to_string(col) + ": non-finite value");
  return v;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path,
                                                std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  header = split_line(line);
  std::vector<std::vector<std::string>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != header.size())
      throw DataError(path + ": line " + std::to_string(lineno) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Dataset read_dataset_csv(const std::string& path) {
  std::vector<std::string> header;
  const auto rows = read_rows(path, header);
  int arm_col = -1, y_col = -1;
  std::vector<int> x_cols;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (header[j] == "a")
      arm_col = j;
    else if (header[j] == "y")
      y_col = j;
    else
      x_cols.push_back(j);
  }
  if (arm_col < 0) throw DataError(path + ": no column named 'a'");
  if (y_col < 0) throw DataError(path + ": no column named 'y'");
  if (x_cols.empty()) throw DataError(path + ": no covariate columns");
  const int n = static_cast<int>(rows.size());
  if (n == 0) throw DataError(path + ": no data rows");

  Dataset data;
  data.x.resize(n, static_cast<int>(x_cols.size()));
  data.arms.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int line = i + 2;
    for (int j = 0; j < static_cast<int>(x_cols.size()); ++j)
      data.x(i, j) = parse_double(rows[i][x_cols[j]], path, line, x_cols[j] + 1);
    const double a = parse_double(rows[i][arm_col], path, line, arm_col + 1);
    if (a != std::floor(a) || a < 1)
      throw DataError(path + ": line " + std::to_string(line) +
                      ": arm label must be a positive integer, got '" +
                      rows[i][arm_col] + "'");
    data.arms[i] = static_cast<int>(a);
    data.y[i] = parse_double(rows[i][y_col], path, line, y_col + 1);
  }
  data.num_arms = data.arms.maxCoeff();
  if (data.num_arms < 2)
    throw DataError(path + ": only one arm present, need at least 2");
  validate(data);
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (int j = 0; j < data.p(); ++j) out << "x" << (j + 1) << ",";
  out << "a,y\n";
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.p(); ++j) out << format_double(data.x(i, j)) << ",";
    out << data.arms[i] << "," << format_double(data.y[i]) << "\n";
  }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* header) {
  std::vector<std::string> head;
  const auto rows = read_rows(path, head);
  if (rows.empty()) throw DataError(path + ": no data rows");
  Eigen::MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(head.size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      m(i, j) = parse_double(rows[i][j], path, i + 2, j + 1);
  if (header) *header = head;
  return m;
}

void write_arms_csv(const Eigen::VectorXi& arms, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "arm\n";
  for (int i = 0; i < arms.size(); ++i) out << arms[i] << "\n";
}

}  // namespace elearn
