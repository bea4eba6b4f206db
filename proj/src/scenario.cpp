#include "elearn/scenario.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "elearn/errors.hpp"
#include "elearn/rng.hpp"

namespace elearn {
namespace {

constexpr double kSqrt2 = 1.4142135623730951;
// E exp(sqrt(2) Z) for standard normal Z, the centering constant of the
// nonlinear treatment-free effect.
const double kExpCenter = std::exp(1.0);

}  // namespace

Eigen::MatrixXd draw_coefficients(int num_arms, int p, std::uint64_t seed) {
  if (p < 5) throw std::invalid_argument("draw_coefficients: p must be at least 5");
  if (num_arms < 2) throw std::invalid_argument("draw_coefficients: need at least 2 arms");
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(num_arms, p + 1);
  for (int k = 0; k < num_arms; ++k) {
    Eigen::VectorXd v(6);
    for (int j = 0; j < 6; ++j) v[j] = normal(rng);
    v /= v.norm();
    beta.block(k, 0, 1, 6) = v.transpose();
  }
  // center across arms so the per-arm effects carry no common component
  beta.rowwise() -= beta.colwise().mean();
  return beta;
}

Scenario make_scenario(int n, int p, int num_arms, bool tf_misspec,
                       bool heteroscedastic, bool prop_misspec, std::uint64_t seed) {
  Scenario s;
  s.n = n;
  s.p = p;
  s.num_arms = num_arms;
  s.tf_misspec = tf_misspec;
  s.heteroscedastic = heteroscedastic;
  s.prop_misspec = prop_misspec;
  s.seed = seed;
  s.beta = draw_coefficients(num_arms, p, derive_seed(seed, "coefficients"));
  validate(s);
  return s;
}

void validate(const Scenario& s) {
  if (s.n < 1) throw std::invalid_argument("scenario: n must be positive");
  if (s.num_arms < 2) throw std::invalid_argument("scenario: need at least 2 arms");
  if (s.p < 5) throw std::invalid_argument("scenario: p must be at least 5");
  if (s.num_arms > s.p)
    throw std::invalid_argument("scenario: num_arms (" + std::to_string(s.num_arms) +
                                ") cannot exceed p (" + std::to_string(s.p) + ")");
  if (s.beta.rows() != s.num_arms || s.beta.cols() != s.p + 1)
    throw std::invalid_argument("scenario: beta must be num_arms x (p+1)");
}

Eigen::MatrixXd true_propensity(const Scenario& s, const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd e(n, s.num_arms);
  for (int k = 0; k < s.num_arms; ++k) {
    if (s.prop_misspec)
      e.col(k) = x.col(k).array().abs().sqrt();
    else
      e.col(k) = (x.col(k).array() / 2.0).exp();
  }
  e.array().colwise() /= e.rowwise().sum().array();
  return e;
}

Eigen::VectorXd true_treatment_free(const Scenario& s, const Eigen::MatrixXd& x) {
  const int k = s.num_arms;
  if (s.tf_misspec)
    return (x.leftCols(k).array() * kSqrt2).exp().rowwise().sum() / k - kExpCenter;
  return x.leftCols(k).rowwise().sum() / std::sqrt(static_cast<double>(k));
}

Eigen::MatrixXd true_sigma2(const Scenario& s, const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  if (!s.heteroscedastic) return Eigen::MatrixXd::Ones(n, s.num_arms);
  Eigen::MatrixXd out(n, s.num_arms);
  for (int k = 0; k < s.num_arms; ++k)
    out.col(k) = (2.0 * kSqrt2 * x.col(k).array()).exp();
  return out;
}

Eigen::MatrixXd true_interaction(const Scenario& s, const Eigen::MatrixXd& x) {
  return (with_intercept(x) * s.beta.transpose());
}

Eigen::VectorXi oracle_rule(const Scenario& s, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd gamma = true_interaction(s, x);
  Eigen::VectorXi arms(gamma.rows());
  for (int i = 0; i < gamma.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < s.num_arms; ++k)
      if (gamma(i, k) > gamma(i, best)) best = k;
    arms[i] = best + 1;
  }
  return arms;
}

Eigen::MatrixXd draw_covariates(const Scenario& s, int rows, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(rows, s.p);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < s.p; ++j) x(i, j) = normal(rng);
  return x;
}

std::uint64_t derive_seed_default(const Scenario& s) {
  return derive_seed(s.seed, "data");
}

Dataset simulate(const Scenario& s, std::uint64_t seed) {
  validate(s);
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Dataset data;
  data.num_arms = s.num_arms;
  data.x.resize(s.n, s.p);
  data.arms.resize(s.n);
  data.y.resize(s.n);
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.p; ++j) data.x(i, j) = normal(rng);
    const double u = uniform(rng);
    const double noise = normal(rng);

    const Eigen::MatrixXd row = data.x.row(i);
    const Eigen::RowVectorXd prop = true_propensity(s, row).row(0);
    int arm = s.num_arms;
    double cum = 0.0;
    for (int k = 0; k < s.num_arms; ++k) {
      cum += prop[k];
      if (u < cum) {
        arm = k + 1;
        break;
      }
    }
    data.arms[i] = arm;

    const double mu0 = true_treatment_free(s, row)[0];
    const double gamma = true_interaction(s, row)(0, arm - 1);
    const double sd = std::sqrt(true_sigma2(s, row)(0, arm - 1));
    data.y[i] = mu0 + gamma + sd * noise;
  }
  validate(data);
  return data;
}

OracleEval oracle_regret_and_misclass(const Scenario& s, const TreatmentRule& rule,
                                      int test_size, std::uint64_t seed) {
  const Eigen::MatrixXd x = draw_covariates(s, test_size, seed);
  const Eigen::MatrixXd gamma = true_interaction(s, x);
  const Eigen::VectorXi best = oracle_rule(s, x);
  const Eigen::VectorXi chosen = rule(x);
  if (chosen.size() != test_size)
    throw std::invalid_argument("oracle evaluation: rule returned wrong length");
  OracleEval ev;
  for (int i = 0; i < test_size; ++i) {
    if (chosen[i] < 1 || chosen[i] > s.num_arms)
      throw std::invalid_argument("oracle evaluation: rule returned arm " +
                                  std::to_string(chosen[i]));
    ev.value += gamma(i, chosen[i] - 1);
    ev.best_value += gamma(i, best[i] - 1);
    ev.misclass += chosen[i] != best[i] ? 1.0 : 0.0;
  }
  ev.value /= test_size;
  ev.best_value /= test_size;
  ev.regret = ev.best_value - ev.value;
  ev.misclass /= test_size;
  return ev;
}

}  // namespace elearn
