#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "elearn/decision.hpp"
#include "elearn/nuisance.hpp"

namespace elearn {

struct SolverConfig {
  int max_iter = 5000;
  double tol = 1e-7;          // relative objective change
  bool restart = true;        // function-value momentum restart
  double backtracking = 0.5;  // step shrink factor
  double initial_step = 1.0;
  double kkt_target = 1e-5;   // path solves polish until below this
  bool penalize_intercept = false;
};

struct ApgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double objective = 0;
};

// One composite problem min f(x) + lambda * penalty(x).  prox(v, t) must be
// the proximal map of t * penalty.
struct ApgProblem {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> prox;
  std::function<double(const Eigen::VectorXd&)> penalty;
  double lambda = 0;
  std::function<void(int, double)> on_iterate;  // (iteration, objective)
};

// Accelerated proximal gradient with backtracking line search and monotone
// (function-value) restarts: the recorded objective never increases.
ApgResult apg_minimize(const ApgProblem& problem, const SolverConfig& config,
                       Eigen::VectorXd x0);

// Row-wise group soft-threshold of a (p+1) x (K-1) coefficient block; the
// intercept row passes through unless penalize_intercept.
Eigen::MatrixXd prox_group_rows(const Eigen::MatrixXd& b, double threshold,
                                bool penalize_intercept = false);

// Coordinate soft-threshold skipping the listed indices.
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double threshold,
                               const std::vector<int>& unpenalized);

std::vector<double> geometric_grid(double max_value, double min_ratio, int size);

// Quadratic smooth part f(x) = x^T q x / 2 - b^T x (+ constant).
struct QuadraticProblem {
  Eigen::MatrixXd q;
  Eigen::VectorXd b;
};

// Solutions along a decreasing lambda grid, warm-started left to right.
struct LambdaPath {
  std::vector<double> lambdas;
  std::vector<Eigen::MatrixXd> solutions;  // each rows x cols
  std::vector<double> criteria;            // filled by tuning
  int chosen = -1;
  int iterations = 0;  // total APG iterations over the path
};

// Smallest lambda that zeroes every penalized row, given the unpenalized
// rows are fit first.  Group geometry: row j of the rows x cols layout.
double lambda_max_group(const QuadraticProblem& problem, int rows, int cols,
                        bool penalize_intercept);

// Group-lasso path over a geometric grid from lambda_max down to
// 1e-3 * lambda_max with grid_size points.  Each solve is polished until
// the KKT violation is below config.kkt_target.
LambdaPath quadratic_group_path(const QuadraticProblem& problem, int rows, int cols,
                                const SolverConfig& config, int grid_size,
                                const std::vector<double>* fixed_grid = nullptr);

// Max row-wise KKT residual of the group-lasso optimality conditions; at
// lambda = 0 this is the largest gradient row norm.
double kkt_violation_group(const Eigen::MatrixXd& b, const QuadraticProblem& problem,
                           double lambda, bool penalize_intercept);

// Coordinate-lasso analogues used by the joint treatment-free fit and the
// penalized regression learners; `unpenalized` lists exempt coordinates.
struct CoordinatePath {
  std::vector<double> lambdas;
  std::vector<Eigen::VectorXd> solutions;
  int iterations = 0;
};

double lambda_max_lasso(const QuadraticProblem& problem, const std::vector<int>& unpenalized);

CoordinatePath quadratic_lasso_path(const QuadraticProblem& problem,
                                    const std::vector<int>& unpenalized,
                                    const SolverConfig& config, int grid_size,
                                    const std::vector<double>* fixed_grid = nullptr);

double kkt_violation_lasso(const Eigen::VectorXd& x, const QuadraticProblem& problem,
                           double lambda, const std::vector<int>& unpenalized);

// ---- estimating-equation wrappers ----------------------------------------

// Builds the quadratic 0.5 * ||rhs - J vec(B)||^2 for the efficient
// estimating equation on the given rows (empty = all rows).
QuadraticProblem gee_quadratic(const Dataset& data, const CodingMatrix& coding,
                               const NuisanceFit& nuisance,
                               const std::vector<int>& rows = {});

LambdaPath lambda_path(const Dataset& data, const CodingMatrix& coding,
                       const NuisanceFit& nuisance, const SolverConfig& config,
                       int grid_size = 50);

double kkt_check(const DecisionModel& model, const Dataset& data,
                 const NuisanceFit& nuisance, double lambda,
                 bool penalize_intercept = false);

struct TuneResult {
  double lambda = 0;
  int lambda_index = -1;
  Eigen::MatrixXd b;          // refit on all rows at the chosen lambda
  LambdaPath path;            // full-data path with mean fold criteria
};

// Cross-validated tuning by the inverse-probability-weighted value of the
// decision rule each path point induces: mean over validation rows of
// 1{rule(x) == a} y / prop(a | x), larger is better, ties to the first
// (largest) lambda.  build_system(rows) supplies the per-fold quadratic;
// fold assignment is shared across the whole path.
TuneResult tune_by_ipwe(
    const Dataset& data, const CodingMatrix& coding, const NuisanceFit& nuisance,
    const std::function<QuadraticProblem(const std::vector<int>&)>& build_system,
    const SolverConfig& config, int grid_size, int folds, std::uint64_t seed);

}  // namespace elearn
