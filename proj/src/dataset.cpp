#include "elearn/dataset.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "elearn/errors.hpp"

namespace elearn {

void validate(const Dataset& data) {
  const int n = data.n();
  if (data.arms.size() != n || data.y.size() != n)
    throw DataError("dataset: x has " + std::to_string(n) + " rows but arms/y have " +
                    std::to_string(data.arms.size()) + "/" + std::to_string(data.y.size()));
  if (data.num_arms < 2) throw DataError("dataset: num_arms must be at least 2");
  for (int i = 0; i < n; ++i) {
    if (data.arms[i] < 1 || data.arms[i] > data.num_arms)
      throw DataError("dataset: row " + std::to_string(i + 1) + " has arm label " +
                      std::to_string(data.arms[i]) + " outside 1.." +
                      std::to_string(data.num_arms));
    if (!std::isfinite(data.y[i]))
      throw DataError("dataset: row " + std::to_string(i + 1) + " has non-finite outcome");
    for (int j = 0; j < data.p(); ++j)
      if (!std::isfinite(data.x(i, j)))
        throw DataError("dataset: row " + std::to_string(i + 1) + ", covariate " +
                        std::to_string(j + 1) + " is non-finite");
  }
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean();
  s.scale.resize(x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size())
    throw std::invalid_argument("standardizer: expected " + std::to_string(mean.size()) +
                                " columns, got " + std::to_string(x.cols()));
  return (x.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& z) const {
  if (z.cols() != mean.size())
    throw std::invalid_argument("standardizer: expected " + std::to_string(mean.size()) +
                                " columns, got " + std::to_string(z.cols()));
  return (z.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

Eigen::MatrixXd poly_expand(const Eigen::MatrixXd& x, int degree) {
  if (degree == 1) return x;
  if (degree != 3)
    throw std::invalid_argument("poly_expand: degree must be 1 or 3, got " +
                                std::to_string(degree));
  Eigen::MatrixXd out(x.rows(), 3 * x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    out.col(3 * j) = x.col(j);
    out.col(3 * j + 1) = x.col(j).array().square();
    out.col(3 * j + 2) = x.col(j).array().cube();
  }
  return out;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

}  // namespace elearn
