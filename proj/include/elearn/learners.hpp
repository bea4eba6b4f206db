#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "elearn/dataset.hpp"
#include "elearn/scenario.hpp"
#include "elearn/score.hpp"
#include "elearn/solver.hpp"

namespace elearn {

enum class PropensityKind { Logistic, Forest, Known, Supplied };
enum class TreatmentFreeKind { Linear, Forest, Zero };
enum class VarianceKind { Forest, Oracle, Constant };

// Shared knobs for every learner.  All learners maximize the outcome;
// negate y when smaller is better.
struct FitOptions {
  PropensityKind propensity = PropensityKind::Logistic;
  TreatmentFreeKind treatment_free = TreatmentFreeKind::Linear;
  VarianceKind variance = VarianceKind::Forest;
  bool tune = true;        // group-lasso tuning by cross-validated IPW value
  int basis_degree = 1;    // 1 linear, 3 per-coordinate cubic
  int folds = 10;          // cross-fitting and tuning folds
  int cv_folds = 5;        // inner folds for nuisance lambda selection
  int lambda_grid = 50;
  std::uint64_t seed = 0;
  int threads = 1;
  bool compute_sandwich = false;
  SolverConfig solver{};
  ForestParams forest{};
  const Scenario* scenario = nullptr;  // required by Known propensity / Oracle variance
  const Eigen::MatrixXd* supplied_propensity = nullptr;  // n x K, Supplied kind
  const NuisanceFit* precomputed = nullptr;  // reuse nuisances fit on this data
};

struct FitDiagnostics {
  double kkt = 0;
  int iterations = 0;     // total solver iterations, 0 for direct solves
  int lambda_index = -1;  // position on the tuned path, -1 when untuned
  std::optional<SandwichVariance> sandwich;
};

// A fitted individualized treatment rule plus everything needed to apply it
// to raw covariates: basis expansion degree, standardizer, coefficients.
struct ITRFit {
  std::string method;
  DecisionModel model;      // on the expanded, standardized design
  Standardizer standardizer;
  int basis_degree = 1;
  double lambda = 0;
  NuisanceFit nuisance;
  FitDiagnostics diagnostics;
};

// Cross-fitted propensity/treatment-free estimates for one training set.
// Exposed so several learners fit on the same data, options and seed can
// share one computation; results are identical either way.
NuisanceFit estimate_nuisances(const Dataset& data, const FitOptions& options);

// Doubly robust, heteroscedasticity-adaptive rule: a unit-variance pilot
// solve, a residual variance regression, then a reweighted solve.
ITRFit fit_elearning(const Dataset& data, const FitOptions& options = {});

// The unit-working-variance pilot alone.
ITRFit fit_rdlearning(const Dataset& data, const FitOptions& options = {});

// Direct-learning weighted least squares on K y w_a; no treatment-free model.
ITRFit fit_dlearning(const Dataset& data, const FitOptions& options = {});

// Penalized least squares of y on covariates, arm dummies and interactions;
// lambda by cross-validated squared error; the fitted per-arm means are
// re-expressed as an angle-based rule.
ITRFit fit_qlearning(const Dataset& data, const FitOptions& options = {});

// Applies the stored transformation pipeline and recommends arms (1-based).
Eigen::VectorXi predict_itr(const ITRFit& fit, const Eigen::MatrixXd& x);

// Fitted per-arm interaction effects on raw covariates, n x K.
Eigen::MatrixXd predict_interaction(const ITRFit& fit, const Eigen::MatrixXd& x);

// Decision function values f(x), n x (K-1).
Eigen::MatrixXd predict_decision(const ITRFit& fit, const Eigen::MatrixXd& x);

}  // namespace elearn
