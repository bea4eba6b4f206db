#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "elearn/csv.hpp"
#include "elearn/errors.hpp"
#include "elearn/rng.hpp"

using namespace elearn;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/elearn_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  auto rng = make_rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = normal(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(std::stod(format_double(1e-300)) == 1e-300);
}

TEST_CASE("dataset CSV round-trip is bit exact") {
  auto rng = make_rng(23);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<int> arm(1, 4);
  Dataset d;
  d.num_arms = 4;
  d.x.resize(37, 5);
  d.arms.resize(37);
  d.y.resize(37);
  for (int i = 0; i < 37; ++i) {
    for (int j = 0; j < 5; ++j) d.x(i, j) = normal(rng);
    d.arms[i] = arm(rng);
    d.y[i] = normal(rng);
  }
  d.arms[0] = 4;  // make sure the max label appears

  TempFile f("roundtrip.csv");
  write_dataset_csv(d, f.path);
  const Dataset back = read_dataset_csv(f.path);
  CHECK(back.num_arms == 4);
  CHECK((back.x.array() == d.x.array()).all());
  CHECK((back.y.array() == d.y.array()).all());
  CHECK((back.arms.array() == d.arms.array()).all());
}

TEST_CASE("read_dataset_csv reports malformed input precisely") {
  TempFile f("bad.csv");

  CHECK_THROWS_AS(read_dataset_csv("/tmp/elearn_no_such_file.csv"), DataError);

  write_text(f.path, "x1,x2,a,y\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(f.path), doctest::Contains("no data rows"),
                       DataError);

  write_text(f.path, "x1,x2,y\n1,2,3\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(f.path), doctest::Contains("'a'"), DataError);

  write_text(f.path, "x1,x2,a\n1,2,1\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(f.path), doctest::Contains("'y'"), DataError);

  write_text(f.path, "x1,a,y\n1,1,2\n3,oops,4\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(f.path), doctest::Contains("line 3"), DataError);

  write_text(f.path, "x1,a,y\n1,1,2\n3,2\n");
  CHECK_THROWS_AS(read_dataset_csv(f.path), DataError);

  write_text(f.path, "x1,a,y\n1,1,2\n3,1,4\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(f.path), doctest::Contains("one arm"), DataError);
}

TEST_CASE("covariate matrix CSV reader") {
  TempFile f("matrix.csv");
  write_text(f.path, "u,v\n1.5,-2\n0,3.25\n");
  std::vector<std::string> header;
  const Eigen::MatrixXd m = read_matrix_csv(f.path, &header);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 2);
  CHECK(m(0, 0) == 1.5);
  CHECK(m(0, 1) == -2.0);
  CHECK(m(1, 1) == 3.25);
  REQUIRE(header.size() == 2);
  CHECK(header[0] == "u");
  CHECK(header[1] == "v");

  write_text(f.path, "u,v\n");
  CHECK_THROWS_AS(read_matrix_csv(f.path), DataError);
}

TEST_CASE("write_arms_csv emits one labeled arm per row") {
  TempFile f("arms.csv");
  const Eigen::VectorXi arms = (Eigen::VectorXi(3) << 2, 1, 3).finished();
  write_arms_csv(arms, f.path);
  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "arm");
  std::getline(in, line);
  CHECK(line == "2");
  std::getline(in, line);
  CHECK(line == "1");
  std::getline(in, line);
  CHECK(line == "3");
  CHECK_FALSE(std::getline(in, line));
}
