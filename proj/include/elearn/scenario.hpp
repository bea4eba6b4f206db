#pragma once

#include <cstdint>
#include <functional>

#include "elearn/dataset.hpp"

namespace elearn {

// One cell of the simulation design.  beta holds the true per-arm linear
// interaction coefficients (K x (p+1), intercept first); rows sum to zero
// across arms per coordinate and only the intercept plus the first five
// covariate coefficients are nonzero.
struct Scenario {
  int n = 0;
  int p = 0;
  int num_arms = 0;
  bool tf_misspec = false;       // nonlinear treatment-free effect
  bool heteroscedastic = false;  // covariate-dependent noise scale
  bool prop_misspec = false;     // non-logistic treatment assignment
  std::uint64_t seed = 0;
  Eigen::MatrixXd beta;
};

// Per-arm coefficients: intercept and first five slopes drawn uniformly on
// the unit sphere in R^6, centered across arms, padded with zeros.
Eigen::MatrixXd draw_coefficients(int num_arms, int p, std::uint64_t seed);

// Fills beta from the scenario seed and validates the cell.
Scenario make_scenario(int n, int p, int num_arms, bool tf_misspec,
                       bool heteroscedastic, bool prop_misspec, std::uint64_t seed);

void validate(const Scenario& s);

// True data-generating functions evaluated on raw covariate rows.
Eigen::MatrixXd true_propensity(const Scenario& s, const Eigen::MatrixXd& x);       // n x K
Eigen::VectorXd true_treatment_free(const Scenario& s, const Eigen::MatrixXd& x);   // centered
Eigen::MatrixXd true_sigma2(const Scenario& s, const Eigen::MatrixXd& x);           // n x K
Eigen::MatrixXd true_interaction(const Scenario& s, const Eigen::MatrixXd& x);      // n x K
Eigen::VectorXi oracle_rule(const Scenario& s, const Eigen::MatrixXd& x);

Eigen::MatrixXd draw_covariates(const Scenario& s, int rows, std::uint64_t seed);

std::uint64_t derive_seed_default(const Scenario& s);

// Draws a dataset of s.n observations.  Same seed, same bytes.
Dataset simulate(const Scenario& s, std::uint64_t seed);
inline Dataset simulate(const Scenario& s) { return simulate(s, derive_seed_default(s)); }

// A (possibly data-driven) treatment rule evaluated batch-wise on raw
// covariates, returning 1-based arms.
using TreatmentRule = std::function<Eigen::VectorXi(const Eigen::MatrixXd&)>;

struct OracleEval {
  double value = 0;      // mean true outcome under the rule
  double best_value = 0; // mean true outcome under the optimal rule
  double regret = 0;     // best_value - value
  double misclass = 0;   // disagreement rate with the optimal rule
};

// Monte-Carlo evaluation on a fresh covariate draw of size test_size.
OracleEval oracle_regret_and_misclass(const Scenario& s, const TreatmentRule& rule,
                                      int test_size, std::uint64_t seed);

}  // namespace elearn
