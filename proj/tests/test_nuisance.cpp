#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "elearn/coding.hpp"
#include "elearn/errors.hpp"
#include "elearn/nuisance.hpp"
#include "elearn/rng.hpp"
#include "elearn/scenario.hpp"

using namespace elearn;

namespace {

// Newton-Raphson maximum likelihood for binary logistic regression; the
// reference implementation the penalized multinomial fit must agree with
// when the penalty is negligible.
Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& xtilde, const Eigen::VectorXd& t) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(xtilde.cols());
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = xtilde * beta;
    const Eigen::VectorXd p = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::VectorXd w = p.array() * (1.0 - p.array()) + 1e-12;
    const Eigen::MatrixXd h = xtilde.transpose() * w.asDiagonal() * xtilde;
    const Eigen::VectorXd step = h.ldlt().solve(xtilde.transpose() * (t - p));
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return beta;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

TEST_CASE("make_folds balances, covers, and reproduces") {
  const Eigen::VectorXi f = make_folds(103, 10, 17);
  REQUIRE(f.size() == 103);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 103; ++i) {
    REQUIRE(f[i] >= 0);
    REQUIRE(f[i] < 10);
    ++counts[static_cast<size_t>(f[i])];
  }
  CHECK(*std::max_element(counts.begin(), counts.end()) -
            *std::min_element(counts.begin(), counts.end()) <=
        1);
  CHECK((make_folds(103, 10, 17) - f).cwiseAbs().maxCoeff() == 0);
  CHECK((make_folds(103, 10, 18) - f).cwiseAbs().maxCoeff() > 0);
  CHECK_THROWS_AS(make_folds(5, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(5, 6, 0), std::invalid_argument);
}

TEST_CASE("cross_fit trains strictly out of fold") {
  const int n = 57;
  const Eigen::VectorXi folds = make_folds(n, 5, 3);
  const Eigen::MatrixXd out = cross_fit(
      n, 2, folds,
      [&](const std::vector<int>& train, const std::vector<int>& test,
          Eigen::MatrixXd& pred) {
        std::set<int> train_set(train.begin(), train.end());
        CHECK(train.size() + test.size() == static_cast<size_t>(n));
        for (int i : test) {
          CHECK(train_set.count(i) == 0);
          pred(i, 0) = folds[i];
          pred(i, 1) = static_cast<double>(train.size());
        }
      });
  for (int i = 0; i < n; ++i) {
    CHECK(out(i, 0) == folds[i]);
    // each row was predicted by a model trained on everything else
    CHECK(out(i, 1) == n - (folds.array() == folds[i]).count());
  }
}

TEST_CASE("floor_simplex repairs rows onto the floored simplex") {
  Eigen::RowVectorXd row(4);
  row << 0.001, 0.499, 0.5, 0.0;
  floor_simplex(row, 0.05);
  CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(row.minCoeff() >= 0.05 - 1e-12);
  CHECK(row[1] <= row[2]);  // ranking preserved

  Eigen::RowVectorXd again = row;
  floor_simplex(again, 0.05);
  CHECK((again - row).cwiseAbs().maxCoeff() < 1e-12);  // idempotent

  Eigen::RowVectorXd zeros = Eigen::RowVectorXd::Zero(3);
  floor_simplex(zeros, 0.01);
  CHECK((zeros.array() - 1.0 / 3).abs().maxCoeff() < 1e-12);

  Eigen::RowVectorXd negatives(3);
  negatives << -0.4, 0.7, 0.7;
  floor_simplex(negatives, 0.1);
  CHECK(negatives[0] == doctest::Approx(0.1));
  CHECK(negatives.sum() == doctest::Approx(1.0));

  Eigen::RowVectorXd bad(3);
  bad << 0.3, 0.3, 0.4;
  CHECK_THROWS_AS(floor_simplex(bad, 0.5), std::invalid_argument);

  // rows of a column-major matrix are accepted directly
  Eigen::MatrixXd m(2, 3);
  m << 1.0, 0.0, 0.0, 0.2, 0.3, 0.5;
  floor_simplex(m.row(0), 0.02);
  CHECK(m(0, 0) == doctest::Approx(0.96));
  CHECK(m(0, 1) == doctest::Approx(0.02));
}

TEST_CASE("binary penalized logistic agrees with Newton maximum likelihood") {
  auto rng = make_rng(29);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = 2500, p = 3;
  Eigen::VectorXd truth(p + 1);
  truth << 0.2, -0.8, 0.5, 0.3;

  Dataset data;
  data.num_arms = 2;
  data.x.resize(n, p);
  data.arms.resize(n);
  data.y = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.x(i, j) = normal(rng);
    Eigen::VectorXd xt(p + 1);
    xt << 1.0, data.x(i, 0), data.x(i, 1), data.x(i, 2);
    const double prob2 = 1.0 / (1.0 + std::exp(-truth.dot(xt)));
    data.arms[i] = unif(rng) < prob2 ? 2 : 1;
  }

  const PropensityModel model = fit_propensity_logistic(data, {1e-8}, 5, 7);
  REQUIRE(model.tau.rows() == p + 1);
  REQUIRE(model.tau.cols() == 2);
  // centered coefficients: the arm-2 linear predictor difference
  const Eigen::VectorXd beta_fit = model.tau.col(1) - model.tau.col(0);

  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  const Eigen::VectorXd target =
      (data.arms.array() == 2).cast<double>().matrix();
  const Eigen::VectorXd beta_mle = irls_logistic(xtilde, target);

  CHECK((beta_fit - beta_mle).cwiseAbs().maxCoeff() < 5e-3);

  const Eigen::MatrixXd pred = model.predict(data.x);
  for (int i = 0; i < n; ++i) {
    const double mle_p2 = 1.0 / (1.0 + std::exp(-beta_mle.dot(xtilde.row(i))));
    CHECK(pred.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(pred(i, 1) - mle_p2) < 2e-3);
  }

  CHECK_THROWS_AS(
      [&] {
        Dataset few = data;
        few.arms.setConstant(1);
        few.arms[0] = 2;
        return fit_propensity_logistic(few, {1e-8}, 5, 7);
      }(),
      DataError);
}

TEST_CASE("joint treatment-free fit solves weighted least squares") {
  const Scenario s = make_scenario(400, 4 + 1, 3, false, false, false, 19);
  const Dataset data = simulate(s, 8);
  const CodingMatrix coding = build_coding(3);
  const int d = data.p() + 1;
  const Eigen::MatrixXd prop =
      Eigen::MatrixXd::Constant(data.n(), 3, 1.0 / 3.0);

  const TreatmentFreeModel model = fit_treatment_free(data, prop, coding, {1e-10}, 5, 23);
  REQUIRE(model.eta.size() == d);
  CHECK(model.lambda == 1e-10);

  // oracle: ordinary least squares on the joint design (uniform weights drop)
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  const double shrink = 1.0 - 1.0 / 3.0;
  Eigen::MatrixXd design(data.n(), 3 * d);
  design.leftCols(d) = xtilde;
  for (int i = 0; i < data.n(); ++i)
    for (int k = 0; k < 2; ++k)
      design.block(i, d * (k + 1), 1, d) =
          shrink * coding.vertices(data.arms[i] - 1, k) * xtilde.row(i);
  const Eigen::VectorXd theta =
      (design.transpose() * design).ldlt().solve(design.transpose() * data.y);
  CHECK((model.eta - theta.head(d)).cwiseAbs().maxCoeff() < 1e-4);

  CHECK((model.predict(data.x) - xtilde * model.eta).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(
      fit_treatment_free(data, Eigen::MatrixXd::Zero(data.n(), 3), coding, {1e-10}, 5, 23),
      std::invalid_argument);
}

TEST_CASE("cross-fitted propensities hug the truth on logistic assignments") {
  Scenario s = make_scenario(1500, 5, 3, false, false, false, 37);
  const Dataset data = simulate(s, 12);
  const Eigen::VectorXi folds = make_folds(data.n(), 5, 41);
  const Eigen::MatrixXd fitted = cross_fit_propensity_logistic(data, folds, 4, 43);
  REQUIRE(fitted.rows() == data.n());
  REQUIRE(fitted.cols() == 3);
  for (int i = 0; i < data.n(); ++i) {
    CHECK(fitted.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fitted.row(i).minCoeff() >= kPropensityFloor - 1e-12);
  }
  const Eigen::MatrixXd truth = true_propensity(s, data.x);
  CHECK((fitted - truth).cwiseAbs().mean() < 0.05);

  // same folds and seed, same predictions
  const Eigen::MatrixXd again = cross_fit_propensity_logistic(data, folds, 4, 43);
  CHECK((fitted - again).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross-fitted treatment-free effect tracks the linear truth") {
  Scenario s = make_scenario(1200, 5, 3, false, false, false, 47);
  const Dataset data = simulate(s, 14);
  Eigen::MatrixXd prop = true_propensity(s, data.x);
  for (int i = 0; i < data.n(); ++i) floor_simplex(prop.row(i), kPropensityFloor);
  const Eigen::VectorXi folds = make_folds(data.n(), 5, 51);
  const CodingMatrix coding = build_coding(3);

  const Eigen::VectorXd mu0 = cross_fit_treatment_free(data, prop, coding, folds, 4, 53);
  REQUIRE(mu0.size() == data.n());
  const Eigen::VectorXd truth = true_treatment_free(s, data.x);
  CHECK(pearson(mu0, truth) > 0.9);
  CHECK((mu0 - truth).cwiseAbs().mean() < 0.3);
}

TEST_CASE("variance regression separates quiet and loud regions") {
  auto rng = make_rng(57);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> arm(1, 2);
  const int n = 600;
  Dataset data;
  data.num_arms = 2;
  data.x.resize(n, 1);
  data.arms.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = normal(rng);
    data.arms[i] = arm(rng);
    const double sd = data.x(i, 0) > 0 ? 5.0 : 1.0;
    data.y[i] = sd * normal(rng);
  }
  DecisionModel pilot;
  pilot.coding = build_coding(2);
  pilot.b = Eigen::MatrixXd::Zero(2, 1);

  ForestParams params;
  params.num_trees = 80;
  params.seed = 5;
  const Eigen::MatrixXd s2 = fit_variance(data, Eigen::VectorXd::Zero(n), pilot, params);
  REQUIRE(s2.rows() == n);
  REQUIRE(s2.cols() == 2);
  CHECK(s2.minCoeff() >= kVarianceFloor);
  CHECK(s2.maxCoeff() <= kVarianceCap);

  double loud = 0, quiet = 0;
  int nl = 0, nq = 0;
  for (int i = 0; i < n; ++i) {
    if (data.x(i, 0) > 0.3) {
      loud += s2.row(i).mean();
      ++nl;
    } else if (data.x(i, 0) < -0.3) {
      quiet += s2.row(i).mean();
      ++nq;
    }
  }
  loud /= nl;
  quiet /= nq;
  CHECK(loud > 4.0 * quiet);
}

TEST_CASE("forest nuisances return valid shapes and are reproducible") {
  Scenario s = make_scenario(300, 5, 3, true, false, false, 59);
  const Dataset data = simulate(s, 16);
  const Eigen::VectorXi folds = make_folds(data.n(), 3, 61);
  ForestParams params;
  params.num_trees = 50;
  params.seed = 63;

  const Eigen::MatrixXd prop = fit_propensity_forest(data, params, folds);
  REQUIRE(prop.rows() == data.n());
  REQUIRE(prop.cols() == 3);
  for (int i = 0; i < data.n(); ++i) {
    CHECK(prop.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(prop.row(i).minCoeff() >= kPropensityFloor - 1e-12);
  }
  CHECK((prop - fit_propensity_forest(data, params, folds)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd mu0 = fit_treatment_free_forest(data, params, folds);
  REQUIRE(mu0.size() == data.n());
  CHECK(mu0.allFinite());
  CHECK((mu0 - fit_treatment_free_forest(data, params, folds)).cwiseAbs().maxCoeff() ==
        0.0);
  // the nonlinear treatment-free truth should at least correlate
  CHECK(pearson(mu0, true_treatment_free(s, data.x)) > 0.5);
}
