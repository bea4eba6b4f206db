#pragma once

#include <Eigen/Dense>

namespace elearn {

// Simplex vertex coding for K treatment arms.  The K unit vectors
// w_1..w_K in R^{K-1} (rows of `vertices`) satisfy <w_j, w_k> = -1/(K-1)
// for j != k and sum to zero.  `omega` = sqrt(1-1/K) * vertices is the
// scaled coding whose Gram matrix `gram` is used by the estimating
// equations; with this construction gram is exactly the identity, but all
// formulas keep the general Gram so the algebra stays visible.
struct CodingMatrix {
  int num_arms = 0;
  Eigen::MatrixXd vertices;  // K x (K-1), unit rows
  Eigen::MatrixXd omega;     // K x (K-1), sqrt(1-1/K) * vertices
  Eigen::MatrixXd gram;      // (K-1) x (K-1), omega^T omega

  Eigen::RowVectorXd vertex(int arm) const { return vertices.row(arm - 1); }
};

// Deterministic construction from the Helmert orthonormal complement of the
// all-ones direction.  For K=2 the rows are (+1) and (-1).
CodingMatrix build_coding(int num_arms);

// gamma_k = (1 - 1/K) <w_k, f>, one entry per arm; the entries sum to zero.
Eigen::VectorXd interaction_effects(const Eigen::VectorXd& f, const CodingMatrix& coding);

// Inverse of interaction_effects: recovers f from the K per-arm effects.
Eigen::VectorXd decision_from_interactions(const Eigen::VectorXd& gamma,
                                           const CodingMatrix& coding);

// Recommended arm: argmax_k <w_k, f>, ties broken toward the lowest index.
// Arms are 1-based.
int decide(const Eigen::VectorXd& f, const CodingMatrix& coding);

}  // namespace elearn
