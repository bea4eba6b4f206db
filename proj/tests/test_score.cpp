#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "elearn/coding.hpp"
#include "elearn/rng.hpp"
#include "elearn/score.hpp"

using namespace elearn;

namespace {

struct Instance {
  Dataset data;
  CodingMatrix coding;
  NuisanceFit nuisance;
  DecisionModel model;
};

// Random problem with strictly positive variances and interior propensities.
Instance random_instance(int n, int p, int k, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.2, 1.0);
  std::uniform_int_distribution<int> arm(1, k);

  Instance inst;
  inst.coding = build_coding(k);
  inst.data.num_arms = k;
  inst.data.x.resize(n, p);
  inst.data.arms.resize(n);
  inst.data.y.resize(n);
  inst.nuisance.mu0.resize(n);
  inst.nuisance.prop.resize(n, k);
  inst.nuisance.sigma2.resize(n, k);
  inst.nuisance.folds = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) inst.data.x(i, j) = normal(rng);
    inst.data.arms[i] = arm(rng);
    inst.data.y[i] = normal(rng);
    inst.nuisance.mu0[i] = normal(rng);
    for (int a = 0; a < k; ++a) {
      inst.nuisance.prop(i, a) = unif(rng);
      inst.nuisance.sigma2(i, a) = unif(rng) + 0.5;
    }
    inst.nuisance.prop.row(i) /= inst.nuisance.prop.row(i).sum();
  }
  inst.model.coding = inst.coding;
  inst.model.b.resize(p + 1, k - 1);
  for (int r = 0; r <= p; ++r)
    for (int c = 0; c < k - 1; ++c) inst.model.b(r, c) = normal(rng);
  return inst;
}

}  // namespace

TEST_CASE("working covariance closed form under uniform nuisances") {
  for (int k : {2, 3, 5}) {
    const CodingMatrix coding = build_coding(k);
    const double s2 = 1.7;
    const Eigen::VectorXd sigma2 = Eigen::VectorXd::Constant(k, s2);
    const Eigen::VectorXd prop = Eigen::VectorXd::Constant(k, 1.0 / k);
    const VEpsMatrix v = v_eps(sigma2, prop, coding);
    // sum_k w_k w_k^T = K/(K-1) I, each term divided by 1/K
    const double scale = s2 * k * k / (k - 1.0);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k - 1, k - 1);
    CHECK((v.v - scale * eye).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((v.vinv - eye / scale).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("working covariance pseudo-inverse identities") {
  auto rng = make_rng(31);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  for (int k : {2, 3, 4, 6}) {
    const CodingMatrix coding = build_coding(k);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd sigma2(k), prop(k);
      for (int a = 0; a < k; ++a) {
        sigma2[a] = unif(rng);
        prop[a] = unif(rng);
      }
      prop /= prop.sum();
      const VEpsMatrix v = v_eps(sigma2, prop, coding);
      CHECK((v.v - v.v.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((v.vinv - v.vinv.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((v.v * v.vinv * v.v - v.v).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((v.vinv * v.v * v.vinv - v.vinv).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("two-arm estimating function hand formula") {
  auto rng = make_rng(37);
  std::normal_distribution<double> normal(0.0, 1.0);
  const CodingMatrix coding = build_coding(2);
  const int d = 4;
  DecisionModel model;
  model.coding = coding;
  model.b.resize(d, 1);
  Eigen::VectorXd xt(d);
  for (int r = 0; r < d; ++r) {
    model.b(r, 0) = normal(rng);
    xt[r] = normal(rng);
  }
  xt[0] = 1.0;
  const double y = 0.8, mu0 = 0.3;
  Eigen::VectorXd prop(2), sigma2(2);
  prop << 0.35, 0.65;
  sigma2 << 1.4, 0.6;

  for (int arm = 1; arm <= 2; ++arm) {
    const double w = arm == 1 ? 1.0 : -1.0;
    const double vscalar = sigma2[0] / prop[0] + sigma2[1] / prop[1];
    const double resid = y - mu0 - 0.5 * w * model.b.col(0).dot(xt);
    const Eigen::VectorXd want = resid * (w / (vscalar * prop[arm - 1])) * xt;
    const Eigen::VectorXd got = phi_eff(xt, arm, y, model, mu0, prop, sigma2);
    REQUIRE(got.size() == d);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("estimating equation is affine: mean phi = rhs - J vec(B)") {
  for (auto [n, p, k] : {std::tuple{30, 4, 2}, {25, 3, 3}, {40, 6, 5}}) {
    const Instance inst = random_instance(n, p, k, 101 + n);
    const Eigen::VectorXd lhs = mean_phi(inst.data, inst.model, inst.nuisance);
    const Eigen::MatrixXd jac = jacobian_phi(inst.data, inst.coding, inst.nuisance);
    const Eigen::VectorXd rhs = rhs_phi(inst.data, inst.coding, inst.nuisance);
    const Eigen::Map<const Eigen::VectorXd> vecb(inst.model.b.data(),
                                                 inst.model.b.size());
    CHECK((lhs - (rhs - jac * vecb)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("analytic jacobian matches central finite differences") {
  for (auto [n, p, k, seed] : {std::tuple{20, 3, 2, 7}, {25, 5, 3, 8}, {15, 4, 5, 9}}) {
    Instance inst = random_instance(n, p, k, seed);
    const int dim = (p + 1) * (k - 1);
    const Eigen::MatrixXd jac = jacobian_phi(inst.data, inst.coding, inst.nuisance);
    REQUIRE(jac.rows() == dim);
    REQUIRE(jac.cols() == dim);

    const double eps = 1e-6;
    Eigen::MatrixXd fd(dim, dim);
    for (int c = 0; c < dim; ++c) {
      const int row = c % (p + 1);
      const int col = c / (p + 1);
      DecisionModel up = inst.model, down = inst.model;
      up.b(row, col) += eps;
      down.b(row, col) -= eps;
      fd.col(c) = -(mean_phi(inst.data, up, inst.nuisance) -
                    mean_phi(inst.data, down, inst.nuisance)) /
                  (2.0 * eps);
    }
    const double rel = (jac - fd).cwiseAbs().maxCoeff() / jac.cwiseAbs().maxCoeff();
    CHECK(rel < 1e-7);
  }
}

TEST_CASE("information equals the jacobian on a balanced arm expansion") {
  // Duplicate every covariate row once per arm with uniform working
  // propensities: the inverse-propensity average over the copies then
  // marginalizes the observed-arm jacobian into the model-based information.
  for (int k : {2, 3, 4}) {
    const Instance base = random_instance(12, 3, k, 55 + static_cast<std::uint64_t>(k));
    const int n = base.data.n();
    Dataset expanded;
    expanded.num_arms = k;
    expanded.x.resize(n * k, base.data.p());
    expanded.arms.resize(n * k);
    expanded.y.resize(n * k);
    NuisanceFit nus;
    nus.mu0 = Eigen::VectorXd::Zero(n * k);
    nus.prop = Eigen::MatrixXd::Constant(n * k, k, 1.0 / k);
    nus.sigma2.resize(n * k, k);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < k; ++a) {
        expanded.x.row(i * k + a) = base.data.x.row(i);
        expanded.arms[i * k + a] = a + 1;
        expanded.y[i * k + a] = base.data.y[i];
        nus.sigma2.row(i * k + a) = base.nuisance.sigma2.row(i);
      }
    const Eigen::MatrixXd info = information(expanded, base.coding, nus);
    const Eigen::MatrixXd jac = jacobian_phi(expanded, base.coding, nus);
    CHECK((info - jac).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((info - info.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("noiseless outcomes are recovered exactly") {
  auto rng = make_rng(63);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k : {2, 3, 4}) {
    Instance inst = random_instance(60, 4, k, 200 + static_cast<std::uint64_t>(k));
    const Eigen::MatrixXd xtilde = with_intercept(inst.data.x);
    // rewrite outcomes as exactly treatment-free + interaction, no noise
    Eigen::MatrixXd btrue(5, k - 1);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < k - 1; ++c) btrue(r, c) = normal(rng);
    const double shrink = 1.0 - 1.0 / k;
    for (int i = 0; i < inst.data.n(); ++i) {
      const Eigen::VectorXd f = btrue.transpose() * xtilde.row(i).transpose();
      inst.data.y[i] =
          inst.nuisance.mu0[i] +
          shrink * inst.coding.vertex(inst.data.arms[i]).dot(f.transpose());
    }
    const DecisionModel fit = solve_unpenalized(inst.data, inst.coding, inst.nuisance);
    CHECK((fit.b - btrue).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("rescaling the working variance leaves the root unchanged") {
  Instance inst = random_instance(50, 4, 3, 77);
  const DecisionModel base = solve_unpenalized(inst.data, inst.coding, inst.nuisance);
  inst.nuisance.sigma2 *= 7.3;
  const DecisionModel scaled = solve_unpenalized(inst.data, inst.coding, inst.nuisance);
  CHECK((base.b - scaled.b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sandwich variance is symmetric and positive semidefinite") {
  const Instance inst = random_instance(80, 4, 3, 91);
  const DecisionModel fit = solve_unpenalized(inst.data, inst.coding, inst.nuisance);
  const SandwichVariance sv = sandwich(inst.data, fit, inst.nuisance);
  CHECK((sv.bread - sv.bread.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sv.meat - sv.meat.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sv.sandwich - sv.sandwich.transpose()).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sv.sandwich);
  CHECK(eig.eigenvalues().minCoeff() > -1e-10);

  // bread * sandwich * bread reproduces the meat
  CHECK((sv.bread * sv.sandwich * sv.bread - sv.meat).cwiseAbs().maxCoeff() <
        1e-6 * std::max(1.0, sv.meat.cwiseAbs().maxCoeff()));
}

TEST_CASE("decision helpers agree with per-row evaluation") {
  const Instance inst = random_instance(40, 5, 4, 121);
  const Eigen::MatrixXd xtilde = with_intercept(inst.data.x);
  const Eigen::MatrixXd f = decision_values(inst.model, xtilde);
  const Eigen::MatrixXd gamma = interaction_values(inst.model, xtilde);
  const Eigen::VectorXi arms = decide_all(inst.model, xtilde);
  REQUIRE(f.rows() == 40);
  REQUIRE(f.cols() == 3);
  REQUIRE(gamma.cols() == 4);
  for (int i = 0; i < 40; ++i) {
    const Eigen::VectorXd fi =
        inst.model.b.transpose() * xtilde.row(i).transpose();
    CHECK((f.row(i).transpose() - fi).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd gi = interaction_effects(fi, inst.coding);
    CHECK((gamma.row(i).transpose() - gi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(arms[i] == decide(fi, inst.coding));
  }
  // per-arm interactions always sum to zero
  CHECK(gamma.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
}
