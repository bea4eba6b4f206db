#pragma once

#include <Eigen/Dense>

namespace elearn {

// Observational unit: covariates x (n x p), 1-based arm labels, outcome y.
// Larger y is better everywhere in this library.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXi arms;
  Eigen::VectorXd y;
  int num_arms = 0;

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }
};

// Throws DataError naming the offending row when shapes disagree, labels
// fall outside 1..num_arms, or any entry is non-finite.
void validate(const Dataset& data);

// Column-wise centering and scaling.  scale uses the 1/n variance so the
// standardized columns have mean 0 and mean square 1; constant columns get
// scale 1 so they pass through unchanged.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;
};

// Per-column polynomial expansion.  degree 1 returns a copy; degree 3
// returns (x_j, x_j^2, x_j^3) blocks in original column order.
Eigen::MatrixXd poly_expand(const Eigen::MatrixXd& x, int degree);

// Prepends the intercept column of ones.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x);

}  // namespace elearn
