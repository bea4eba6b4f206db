#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "elearn/dataset.hpp"
#include "elearn/decision.hpp"
#include "elearn/forest.hpp"

namespace elearn {

inline constexpr double kPropensityFloor = 0.01;
inline constexpr double kVarianceFloor = 1e-4;
inline constexpr double kVarianceCap = 1e6;

// Cross-fitted nuisance predictions for one training set.  prop rows lie on
// the simplex with every entry >= kPropensityFloor; sigma2 is clamped to
// [kVarianceFloor, kVarianceCap].
struct NuisanceFit {
  Eigen::VectorXd mu0;    // n, treatment-free effect
  Eigen::MatrixXd prop;   // n x K
  Eigen::MatrixXd sigma2; // n x K, working variance (ones until estimated)
  Eigen::VectorXi folds;  // n, cross-fitting fold of each row
};

// Penalized multinomial logistic propensity model.  tau is (p+1) x K with
// the intercept row first, centered across arms per coordinate; the penalty
// groups each covariate row across all arms.
struct PropensityModel {
  Eigen::MatrixXd tau;
  double lambda = 0;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;  // softmax rows
};

// Working linear treatment-free model, fit jointly with an interaction part
// by inverse-propensity-weighted lasso; only eta is kept.
struct TreatmentFreeModel {
  Eigen::VectorXd eta;  // p+1
  double lambda = 0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

// Deterministic balanced fold assignment of n rows.
Eigen::VectorXi make_folds(int n, int folds, std::uint64_t seed);

// Generic cross-fitting: for every fold, fit_predict(train, test, out) must
// fill out.row(i) for each test index i from a fit on the train indices.
Eigen::MatrixXd cross_fit(
    int n, int cols, const Eigen::VectorXi& folds,
    const std::function<void(const std::vector<int>&, const std::vector<int>&,
                             Eigen::MatrixXd&)>& fit_predict);

// Rescales a probability row onto the simplex with all entries >= floor.
void floor_simplex(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row,
                   double floor);

// Group-lasso multinomial logistic regression; lambda chosen by cv_folds
// cross-validated held-out log-likelihood over a 50-point geometric grid
// (or the supplied grid).  Every arm needs at least 2 observations.
PropensityModel fit_propensity_logistic(const Dataset& data,
                                        const std::vector<double>& lambda_grid,
                                        int cv_folds, std::uint64_t seed);

// Cross-fitted propensity predictions: lambda is tuned once on the full
// data, then the model is refit per fold at that lambda.  Rows floored.
Eigen::MatrixXd cross_fit_propensity_logistic(const Dataset& data,
                                              const Eigen::VectorXi& folds,
                                              int cv_folds, std::uint64_t seed);

// Per-arm indicator forests, cross-fitted, normalized and floored.
Eigen::MatrixXd fit_propensity_forest(const Dataset& data, const ForestParams& params,
                                      const Eigen::VectorXi& folds);

// Joint inverse-propensity-weighted lasso of the outcome on (1, x) plus the
// angle-based interaction design; intercepts are unpenalized and lambda is
// chosen by cv_folds cross-validated weighted squared error.
TreatmentFreeModel fit_treatment_free(const Dataset& data, const Eigen::MatrixXd& propensity,
                                      const CodingMatrix& coding,
                                      const std::vector<double>& lambda_grid,
                                      int cv_folds, std::uint64_t seed);

Eigen::VectorXd cross_fit_treatment_free(const Dataset& data,
                                         const Eigen::MatrixXd& propensity,
                                         const CodingMatrix& coding,
                                         const Eigen::VectorXi& folds, int cv_folds,
                                         std::uint64_t seed);

// Per-arm outcome forests averaged into a treatment-free effect, cross-fitted.
Eigen::VectorXd fit_treatment_free_forest(const Dataset& data, const ForestParams& params,
                                          const Eigen::VectorXi& folds);

// Forest regression of squared working residuals on (x, one-hot arm);
// returns clamped sigma2 predictions for every observation and arm.
Eigen::MatrixXd fit_variance(const Dataset& data, const Eigen::VectorXd& mu0,
                             const DecisionModel& pilot, const ForestParams& params);

}  // namespace elearn
