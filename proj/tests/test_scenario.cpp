#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "elearn/rng.hpp"
#include "elearn/scenario.hpp"

using namespace elearn;

namespace {

Scenario base_cell(bool tf, bool het, bool prop, std::uint64_t seed = 4) {
  return make_scenario(200, 5, 3, tf, het, prop, seed);
}

}  // namespace

TEST_CASE("coefficient draws are centered, sparse, and reproducible") {
  const Eigen::MatrixXd b1 = draw_coefficients(4, 12, 9);
  const Eigen::MatrixXd b2 = draw_coefficients(4, 12, 9);
  CHECK((b1 - b2).norm() == 0.0);
  CHECK((b1 - draw_coefficients(4, 12, 10)).norm() > 1e-3);

  REQUIRE(b1.rows() == 4);
  REQUIRE(b1.cols() == 13);
  // centered across arms per coordinate
  CHECK(b1.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  // only intercept + first five slopes are active
  CHECK(b1.rightCols(12 - 5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b1.leftCols(6).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(draw_coefficients(3, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(draw_coefficients(1, 8, 0), std::invalid_argument);
}

TEST_CASE("scenario validation") {
  CHECK_THROWS_AS(make_scenario(100, 4, 3, false, false, false, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_scenario(100, 5, 6, false, false, false, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_scenario(0, 5, 3, false, false, false, 0), std::invalid_argument);
  Scenario s = base_cell(false, false, false);
  s.beta.conservativeResize(2, s.p + 1);
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
}

TEST_CASE("propensity truth matches its formula") {
  const Scenario s = base_cell(false, false, false);
  Eigen::MatrixXd x(1, 5);
  x << 0.3, -1.2, 0.8, 2.0, -0.5;

  const Eigen::MatrixXd e = true_propensity(s, x);
  REQUIRE(e.rows() == 1);
  REQUIRE(e.cols() == 3);
  const double z1 = std::exp(0.3 / 2), z2 = std::exp(-1.2 / 2), z3 = std::exp(0.8 / 2);
  const double total = z1 + z2 + z3;
  CHECK(e(0, 0) == doctest::Approx(z1 / total).epsilon(1e-12));
  CHECK(e(0, 1) == doctest::Approx(z2 / total).epsilon(1e-12));
  CHECK(e(0, 2) == doctest::Approx(z3 / total).epsilon(1e-12));
  CHECK(e.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));

  const Scenario sm = base_cell(false, false, true);
  const Eigen::MatrixXd em = true_propensity(sm, x);
  const double a1 = std::sqrt(0.3), a2 = std::sqrt(1.2), a3 = std::sqrt(0.8);
  CHECK(em(0, 1) == doctest::Approx(a2 / (a1 + a2 + a3)).epsilon(1e-12));
}

TEST_CASE("treatment-free truth matches its formula") {
  Eigen::MatrixXd x(1, 5);
  x << 0.4, -0.7, 1.1, 9.0, 9.0;  // trailing columns must not matter

  const Scenario lin = base_cell(false, false, false);
  CHECK(true_treatment_free(lin, x)[0] ==
        doctest::Approx((0.4 - 0.7 + 1.1) / std::sqrt(3.0)).epsilon(1e-12));

  const Scenario nl = base_cell(true, false, false);
  const double r2 = std::sqrt(2.0);
  const double want =
      (std::exp(r2 * 0.4) + std::exp(r2 * -0.7) + std::exp(r2 * 1.1)) / 3.0 - std::exp(1.0);
  CHECK(true_treatment_free(nl, x)[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("nonlinear treatment-free effect is mean centered") {
  const Scenario nl = base_cell(true, false, false);
  const Eigen::MatrixXd x = draw_covariates(nl, 400000, 8);
  CHECK(true_treatment_free(nl, x).mean() == doctest::Approx(0.0).epsilon(0.02));
}

TEST_CASE("noise variance truth matches its formula") {
  Eigen::MatrixXd x(1, 5);
  x << 0.2, -0.3, 0.5, 0.0, 0.0;

  const Scenario homo = base_cell(false, false, false);
  CHECK((true_sigma2(homo, x).array() - 1.0).abs().maxCoeff() == 0.0);

  const Scenario het = base_cell(false, true, false);
  const Eigen::MatrixXd s2 = true_sigma2(het, x);
  const double r2 = std::sqrt(2.0);
  CHECK(s2(0, 0) == doctest::Approx(std::exp(2 * r2 * 0.2)).epsilon(1e-12));
  CHECK(s2(0, 1) == doctest::Approx(std::exp(2 * r2 * -0.3)).epsilon(1e-12));
  CHECK(s2(0, 2) == doctest::Approx(std::exp(2 * r2 * 0.5)).epsilon(1e-12));
}

TEST_CASE("interaction truth is the linear model in beta") {
  const Scenario s = base_cell(false, false, false);
  const Eigen::MatrixXd x = draw_covariates(s, 20, 5);
  const Eigen::MatrixXd gamma = true_interaction(s, x);
  REQUIRE(gamma.rows() == 20);
  REQUIRE(gamma.cols() == 3);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd xt(6);
    xt << 1.0, x(i, 0), x(i, 1), x(i, 2), x(i, 3), x(i, 4);
    for (int k = 0; k < 3; ++k)
      CHECK(gamma(i, k) ==
            doctest::Approx(s.beta.row(k).head(6).dot(xt)).epsilon(1e-12));
  }
  // zero-sum across arms because beta is centered
  CHECK(gamma.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);

  const Eigen::VectorXi best = oracle_rule(s, x);
  for (int i = 0; i < 20; ++i) {
    int arg = 0;
    for (int k = 1; k < 3; ++k)
      if (gamma(i, k) > gamma(i, arg)) arg = k;
    CHECK(best[i] == arg + 1);
  }
}

TEST_CASE("simulate is deterministic and respects the assignment mechanism") {
  Scenario s = base_cell(false, false, false);
  s.n = 20000;
  const Dataset d1 = simulate(s, 77);
  const Dataset d2 = simulate(s, 77);
  CHECK((d1.x.array() == d2.x.array()).all());
  CHECK((d1.y.array() == d2.y.array()).all());
  CHECK((d1.arms.array() == d2.arms.array()).all());

  const Dataset d3 = simulate(s, 78);
  CHECK((d1.x - d3.x).norm() > 1e-6);

  // empirical arm frequencies track the mean true propensity
  const Eigen::MatrixXd prop = true_propensity(s, d1.x);
  for (int k = 1; k <= 3; ++k) {
    const double freq = (d1.arms.array() == k).cast<double>().mean();
    CHECK(freq == doctest::Approx(prop.col(k - 1).mean()).epsilon(0.05));
  }
}

TEST_CASE("simulated outcomes decompose into truth plus noise") {
  Scenario s = base_cell(true, true, false, 21);
  s.n = 60000;
  const Dataset d = simulate(s, 3);
  const Eigen::VectorXd mu0 = true_treatment_free(s, d.x);
  const Eigen::MatrixXd gamma = true_interaction(s, d.x);
  const Eigen::MatrixXd s2 = true_sigma2(s, d.x);
  double z_mean = 0.0, z2_mean = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const int a = d.arms[i] - 1;
    const double z = (d.y[i] - mu0[i] - gamma(i, a)) / std::sqrt(s2(i, a));
    z_mean += z;
    z2_mean += z * z;
  }
  z_mean /= d.n();
  z2_mean /= d.n();
  CHECK(z_mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(z2_mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("oracle evaluation scores rules against the best rule") {
  const Scenario s = base_cell(false, false, false, 13);

  const OracleEval perfect = oracle_regret_and_misclass(
      s, [&](const Eigen::MatrixXd& x) { return oracle_rule(s, x); }, 5000, 31);
  CHECK(perfect.regret == doctest::Approx(0.0));
  CHECK(perfect.misclass == doctest::Approx(0.0));
  CHECK(perfect.value == doctest::Approx(perfect.best_value));

  const OracleEval fixed = oracle_regret_and_misclass(
      s,
      [](const Eigen::MatrixXd& x) {
        return Eigen::VectorXi::Constant(x.rows(), 1).eval();
      },
      5000, 31);
  CHECK(fixed.regret > 0.0);
  CHECK(fixed.misclass > 0.3);
  CHECK(fixed.regret == doctest::Approx(fixed.best_value - fixed.value));

  // hand-recompute the fixed-arm value from the same covariate draw
  const Eigen::MatrixXd x = draw_covariates(s, 5000, 31);
  const Eigen::MatrixXd gamma = true_interaction(s, x);
  CHECK(fixed.value == doctest::Approx(gamma.col(0).mean()).epsilon(1e-12));

  CHECK_THROWS_AS(oracle_regret_and_misclass(
                      s,
                      [](const Eigen::MatrixXd& x) {
                        return Eigen::VectorXi::Constant(x.rows() - 1, 1).eval();
                      },
                      100, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(oracle_regret_and_misclass(
                      s,
                      [](const Eigen::MatrixXd& x) {
                        return Eigen::VectorXi::Constant(x.rows(), 9).eval();
                      },
                      100, 1),
                  std::invalid_argument);
}
