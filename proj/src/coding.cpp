#include "elearn/coding.hpp"

#include <cmath>
#include <stdexcept>

namespace elearn {

CodingMatrix build_coding(int num_arms) {
  if (num_arms < 2) throw std::invalid_argument("build_coding: need at least 2 arms");
  const int k = num_arms;
  // Helmert rows span the orthogonal complement of the ones vector in R^K.
  Eigen::MatrixXd helmert = Eigen::MatrixXd::Zero(k - 1, k);
  for (int j = 1; j < k; ++j) {
    const double s = 1.0 / std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) helmert(j - 1, i) = s;
    helmert(j - 1, j) = -s * j;
  }
  CodingMatrix c;
  c.num_arms = k;
  const double scale = std::sqrt(1.0 - 1.0 / k);
  // Columns of the Helmert block have norm sqrt(1-1/K); rescaling them to
  // unit length gives the vertex set, and omega recovers the raw columns.
  c.omega = helmert.transpose();
  c.vertices = c.omega / scale;
  c.gram = c.omega.transpose() * c.omega;
  return c;
}

Eigen::VectorXd interaction_effects(const Eigen::VectorXd& f, const CodingMatrix& coding) {
  const double shrink = 1.0 - 1.0 / coding.num_arms;
  return shrink * (coding.vertices * f);
}

Eigen::VectorXd decision_from_interactions(const Eigen::VectorXd& gamma,
                                           const CodingMatrix& coding) {
  // gamma = (1-1/K) W f  =>  f = gram^{-1} W^T gamma for mean-zero gamma.
  return coding.gram.ldlt().solve(coding.vertices.transpose() * gamma);
}

int decide(const Eigen::VectorXd& f, const CodingMatrix& coding) {
  const Eigen::VectorXd scores = coding.vertices * f;
  int best = 0;
  for (int k = 1; k < coding.num_arms; ++k)
    if (scores[k] > scores[best]) best = k;
  return best + 1;
}

}  // namespace elearn
