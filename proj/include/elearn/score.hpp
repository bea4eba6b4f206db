#pragma once

#include <vector>

#include "elearn/dataset.hpp"
#include "elearn/decision.hpp"
#include "elearn/nuisance.hpp"

namespace elearn {

// Working covariance of the angle-coded residual at one point:
// V = sum_k sigma2(x,k) w_k w_k^T / prop(k|x), (K-1) x (K-1), PSD.  vinv is
// the symmetric pseudo-inverse (eigenvalues below 1e-10 * max treated as 0).
struct VEpsMatrix {
  Eigen::MatrixXd v;
  Eigen::MatrixXd vinv;
};

VEpsMatrix v_eps(const Eigen::VectorXd& sigma2_row, const Eigen::VectorXd& prop_row,
                 const CodingMatrix& coding);

// Efficient estimating function of one observation:
//   [y - mu0 - (1-1/K) <w_a, B^T xt>] * [(G V^{-1} w_a / prop_a) (x) xt]
// with G the coding Gram matrix and (x) the Kronecker product; vec(B) is
// column-major, so block k of the output multiplies column k of B.
Eigen::VectorXd phi_eff(const Eigen::VectorXd& xtilde, int arm, double y,
                        const DecisionModel& model, double mu0,
                        const Eigen::VectorXd& prop_row, const Eigen::VectorXd& sigma2_row);

// E_n phi(B) over the listed rows (empty = all).
Eigen::VectorXd mean_phi(const Dataset& data, const DecisionModel& model,
                         const NuisanceFit& nuisance, const std::vector<int>& rows = {});

// Mean of -d phi / d vec(B)^T; independent of y and of B, so the estimating
// equation is affine: E_n phi(B) = rhs - J vec(B).
Eigen::MatrixXd jacobian_phi(const Dataset& data, const CodingMatrix& coding,
                             const NuisanceFit& nuisance, const std::vector<int>& rows = {});

// rhs of the affine estimating equation, E_n[(y - mu0)(G V^{-1} w_a / p_a) (x) xt].
Eigen::VectorXd rhs_phi(const Dataset& data, const CodingMatrix& coding,
                        const NuisanceFit& nuisance, const std::vector<int>& rows = {});

// Model-based information matrix E_n[(G V^{-1} G) (x) xt xt^T].
Eigen::MatrixXd information(const Dataset& data, const CodingMatrix& coding,
                            const NuisanceFit& nuisance);

struct SandwichVariance {
  Eigen::MatrixXd bread;     // symmetrized empirical jacobian
  Eigen::MatrixXd meat;      // E_n[phi phi^T]
  Eigen::MatrixXd sandwich;  // bread^{-1} meat bread^{-1}
};

// Throws NumericalError when the bread is not positive definite.
SandwichVariance sandwich(const Dataset& data, const DecisionModel& model,
                          const NuisanceFit& nuisance);

// Root of the affine estimating equation via one linear solve; throws
// NumericalError on a singular jacobian.
DecisionModel solve_unpenalized(const Dataset& data, const CodingMatrix& coding,
                                const NuisanceFit& nuisance);

}  // namespace elearn
