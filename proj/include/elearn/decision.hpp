#pragma once

#include "elearn/coding.hpp"
#include "elearn/dataset.hpp"

namespace elearn {

// Linear angle-based decision function f(x) = B^T (1, x^T)^T in R^{K-1}.
// B is (p+1) x (K-1) with the intercept row first.  The covariates here are
// whatever design the model was fit on (possibly expanded/standardized);
// learner-level wrappers own that transformation.
struct DecisionModel {
  Eigen::MatrixXd b;
  CodingMatrix coding;

  int dim() const { return static_cast<int>(b.rows()); }
};

// Rows of f(x) for each design row xtilde (n x (p+1), intercept included).
Eigen::MatrixXd decision_values(const DecisionModel& model, const Eigen::MatrixXd& xtilde);

// Per-arm interaction effects gamma(x, k), n x K.
Eigen::MatrixXd interaction_values(const DecisionModel& model, const Eigen::MatrixXd& xtilde);

// Recommended arms, n entries, 1-based, first-index tie-break.
Eigen::VectorXi decide_all(const DecisionModel& model, const Eigen::MatrixXd& xtilde);

}  // namespace elearn
