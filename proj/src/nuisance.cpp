#include "elearn/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "elearn/errors.hpp"
#include "elearn/rng.hpp"
#include "elearn/solver.hpp"

namespace elearn {
namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd p = scores.colwise() - scores.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

Eigen::MatrixXd onehot_arms(const Eigen::VectorXi& arms, int num_arms) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(arms.size(), num_arms);
  for (int i = 0; i < arms.size(); ++i) y(i, arms[i] - 1) = 1.0;
  return y;
}

// Centered smoothed log-frequency intercepts; finite even when an arm is
// missing from the rows at hand.
Eigen::MatrixXd multinomial_null(const Eigen::MatrixXd& onehot, int dim) {
  const int k = static_cast<int>(onehot.cols());
  Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(dim, k);
  const double n = static_cast<double>(onehot.rows());
  for (int a = 0; a < k; ++a)
    tau(0, a) = std::log((onehot.col(a).sum() + 0.5) / (n + 0.5 * k));
  tau.row(0).array() -= tau.row(0).mean();
  return tau;
}

// Negative mean log-likelihood and its gradient in vec(tau), column-major.
struct MultinomialSmooth {
  const Eigen::MatrixXd& xtilde;
  const Eigen::MatrixXd& onehot;

  double value(const Eigen::VectorXd& vec) const {
    const int d = static_cast<int>(xtilde.cols());
    const int k = static_cast<int>(onehot.cols());
    const Eigen::Map<const Eigen::MatrixXd> tau(vec.data(), d, k);
    const Eigen::MatrixXd scores = xtilde * tau;
    const Eigen::VectorXd rowmax = scores.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        ((scores.colwise() - rowmax).array().exp().rowwise().sum().log() +
         rowmax.array())
            .matrix();
    const double picked = scores.cwiseProduct(onehot).sum();
    return (lse.sum() - picked) / static_cast<double>(xtilde.rows());
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& vec) const {
    const int d = static_cast<int>(xtilde.cols());
    const int k = static_cast<int>(onehot.cols());
    const Eigen::Map<const Eigen::MatrixXd> tau(vec.data(), d, k);
    const Eigen::MatrixXd p = softmax_rows(xtilde * tau);
    const Eigen::MatrixXd g =
        xtilde.transpose() * (p - onehot) / static_cast<double>(xtilde.rows());
    return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  }
};

ApgProblem multinomial_problem(const MultinomialSmooth& smooth, int d, int k,
                               double lambda) {
  ApgProblem pb;
  pb.lambda = lambda;
  pb.value = [&smooth](const Eigen::VectorXd& v) { return smooth.value(v); };
  pb.gradient = [&smooth](const Eigen::VectorXd& v) { return smooth.gradient(v); };
  pb.prox = [d, k](const Eigen::VectorXd& v, double t) -> Eigen::VectorXd {
    const Eigen::Map<const Eigen::MatrixXd> m(v.data(), d, k);
    const Eigen::MatrixXd shrunk = prox_group_rows(m, t, false);
    return Eigen::Map<const Eigen::VectorXd>(shrunk.data(), v.size());
  };
  pb.penalty = [d, k](const Eigen::VectorXd& v) {
    const Eigen::Map<const Eigen::MatrixXd> m(v.data(), d, k);
    double j = 0;
    for (int r = 1; r < d; ++r) j += m.row(r).norm();
    return j;
  };
  return pb;
}

// Path of group-lasso multinomial fits, warm-started; visit(g, tau) is
// called at every grid point.
void multinomial_path(const Eigen::MatrixXd& xtilde, const Eigen::MatrixXd& onehot,
                      const std::vector<double>& grid, const SolverConfig& cfg,
                      const std::function<void(size_t, const Eigen::MatrixXd&)>& visit) {
  const int d = static_cast<int>(xtilde.cols());
  const int k = static_cast<int>(onehot.cols());
  const MultinomialSmooth smooth{xtilde, onehot};
  Eigen::MatrixXd tau0 = multinomial_null(onehot, d);
  Eigen::VectorXd warm = Eigen::Map<const Eigen::VectorXd>(tau0.data(), tau0.size());
  for (size_t g = 0; g < grid.size(); ++g) {
    ApgProblem pb = multinomial_problem(smooth, d, k, grid[g]);
    warm = apg_minimize(pb, cfg, warm).x;
    Eigen::MatrixXd tau = Eigen::Map<const Eigen::MatrixXd>(warm.data(), d, k);
    tau.array().colwise() -= tau.rowwise().mean().array();  // identifiability
    visit(g, tau);
    warm = Eigen::Map<const Eigen::VectorXd>(tau.data(), tau.size());
  }
}

std::vector<double> multinomial_grid(const Eigen::MatrixXd& xtilde,
                                     const Eigen::MatrixXd& onehot, int grid_size) {
  const int d = static_cast<int>(xtilde.cols());
  const Eigen::MatrixXd tau0 = multinomial_null(onehot, d);
  const MultinomialSmooth smooth{xtilde, onehot};
  const Eigen::VectorXd g = smooth.gradient(
      Eigen::Map<const Eigen::VectorXd>(tau0.data(), tau0.size()));
  const Eigen::Map<const Eigen::MatrixXd> gm(g.data(), d, onehot.cols());
  double lmax = 0;
  for (int j = 1; j < d; ++j) lmax = std::max(lmax, gm.row(j).norm());
  return geometric_grid(std::max(lmax, 1e-12), 1e-3, grid_size);
}

// Held-out mean log-likelihood of a fitted tau.
double heldout_loglik(const Eigen::MatrixXd& xtilde, const Eigen::MatrixXd& onehot,
                      const Eigen::MatrixXd& tau) {
  const MultinomialSmooth smooth{xtilde, onehot};
  return -smooth.value(Eigen::Map<const Eigen::VectorXd>(tau.data(), tau.size()));
}

SolverConfig nuisance_solver_config() {
  SolverConfig cfg;
  cfg.tol = 1e-9;
  cfg.max_iter = 2000;
  return cfg;
}

// Joint inverse-propensity-weighted design [xt | (1-1/K) w_a (x) xt] whose
// coefficient vector stacks eta on top of vec(B).
Eigen::MatrixXd joint_tf_design(const Dataset& data, const CodingMatrix& coding) {
  const int n = data.n();
  const int d = data.p() + 1;
  const int km1 = coding.num_arms - 1;
  const double shrink = 1.0 - 1.0 / coding.num_arms;
  Eigen::MatrixXd design(n, d * (km1 + 1));
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  design.leftCols(d) = xtilde;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < km1; ++k)
      design.block(i, d * (k + 1), 1, d) =
          shrink * coding.vertices(data.arms[i] - 1, k) * xtilde.row(i);
  return design;
}

QuadraticProblem weighted_ls_problem(const Eigen::MatrixXd& design,
                                     const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& weights,
                                     const std::vector<int>& rows) {
  QuadraticProblem pb;
  const int dim = static_cast<int>(design.cols());
  pb.q = Eigen::MatrixXd::Zero(dim, dim);
  pb.b = Eigen::VectorXd::Zero(dim);
  for (int i : rows) {
    pb.q.noalias() += weights[i] * design.row(i).transpose() * design.row(i);
    pb.b.noalias() += weights[i] * y[i] * design.row(i).transpose();
  }
  pb.q /= static_cast<double>(rows.size());
  pb.b /= static_cast<double>(rows.size());
  return pb;
}

std::vector<int> index_range(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

Eigen::MatrixXd PropensityModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() + 1 != tau.rows())
    throw std::invalid_argument("propensity predict: expected " +
                                std::to_string(tau.rows() - 1) + " covariates");
  return softmax_rows(with_intercept(x) * tau);
}

Eigen::VectorXd TreatmentFreeModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() + 1 != eta.size())
    throw std::invalid_argument("treatment-free predict: expected " +
                                std::to_string(eta.size() - 1) + " covariates");
  return with_intercept(x) * eta;
}

Eigen::VectorXi make_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 2 || folds > n)
    throw std::invalid_argument("make_folds: need 2 <= folds <= n");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  Eigen::VectorXi fold_of(n);
  for (int i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;
  return fold_of;
}

Eigen::MatrixXd cross_fit(
    int n, int cols, const Eigen::VectorXi& folds,
    const std::function<void(const std::vector<int>&, const std::vector<int>&,
                             Eigen::MatrixXd&)>& fit_predict) {
  if (folds.size() != n) throw std::invalid_argument("cross_fit: fold map size mismatch");
  const int num_folds = folds.maxCoeff() + 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, cols);
  for (int f = 0; f < num_folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (folds[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    if (train.empty()) throw std::invalid_argument("cross_fit: a fold holds all rows");
    fit_predict(train, test, out);
  }
  return out;
}

void floor_simplex(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row,
                   double floor) {
  const int k = static_cast<int>(row.size());
  if (floor < 0 || floor * k >= 1.0)
    throw std::invalid_argument("floor_simplex: need 0 <= floor < 1/K");
  for (int i = 0; i < k; ++i) row[i] = std::max(row[i], 0.0);
  const double total = row.sum();
  if (total > 0)
    row /= total;
  else
    row.setConstant(1.0 / k);
  std::vector<char> pinned(static_cast<size_t>(k), 0);
  for (int round = 0; round < k; ++round) {
    bool changed = false;
    for (int i = 0; i < k; ++i)
      if (!pinned[static_cast<size_t>(i)] && row[i] < floor) {
        pinned[static_cast<size_t>(i)] = 1;
        changed = true;
      }
    if (!changed) break;
    int m = 0;
    double free_mass = 0;
    for (int i = 0; i < k; ++i)
      pinned[static_cast<size_t>(i)] ? void(++m) : void(free_mass += row[i]);
    const double target = 1.0 - m * floor;
    for (int i = 0; i < k; ++i)
      row[i] = pinned[static_cast<size_t>(i)] ? floor : row[i] * target / free_mass;
  }
}

PropensityModel fit_propensity_logistic(const Dataset& data,
                                        const std::vector<double>& lambda_grid,
                                        int cv_folds, std::uint64_t seed) {
  validate(data);
  for (int a = 1; a <= data.num_arms; ++a) {
    const int count = static_cast<int>((data.arms.array() == a).count());
    if (count < 2)
      throw DataError("fit_propensity_logistic: arm " + std::to_string(a) + " has " +
                      std::to_string(count) + " observations, need at least 2");
  }
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  const Eigen::MatrixXd onehot = onehot_arms(data.arms, data.num_arms);
  const SolverConfig cfg = nuisance_solver_config();

  std::vector<double> grid =
      lambda_grid.empty() ? multinomial_grid(xtilde, onehot, 50) : lambda_grid;

  int best = 0;
  if (grid.size() > 1) {
    const Eigen::VectorXi fold_of = make_folds(data.n(), cv_folds, derive_seed(seed, "cv"));
    std::vector<double> criterion(grid.size(), 0.0);
    for (int f = 0; f < cv_folds; ++f) {
      std::vector<int> train, valid;
      for (int i = 0; i < data.n(); ++i) (fold_of[i] == f ? valid : train).push_back(i);
      const Eigen::MatrixXd xt_train = xtilde(train, Eigen::all);
      const Eigen::MatrixXd oh_train = onehot(train, Eigen::all);
      const Eigen::MatrixXd xt_valid = xtilde(valid, Eigen::all);
      const Eigen::MatrixXd oh_valid = onehot(valid, Eigen::all);
      multinomial_path(xt_train, oh_train, grid, cfg,
                       [&](size_t g, const Eigen::MatrixXd& tau) {
                         criterion[g] += heldout_loglik(xt_valid, oh_valid, tau) / cv_folds;
                       });
    }
    for (size_t g = 1; g < grid.size(); ++g)
      if (criterion[g] > criterion[best]) best = static_cast<int>(g);
  }

  PropensityModel model;
  model.lambda = grid[static_cast<size_t>(best)];
  std::vector<double> head(grid.begin(), grid.begin() + best + 1);
  multinomial_path(xtilde, onehot, head, cfg, [&](size_t g, const Eigen::MatrixXd& tau) {
    if (g + 1 == head.size()) model.tau = tau;
  });
  return model;
}

Eigen::MatrixXd cross_fit_propensity_logistic(const Dataset& data,
                                              const Eigen::VectorXi& folds,
                                              int cv_folds, std::uint64_t seed) {
  const PropensityModel tuned =
      fit_propensity_logistic(data, {}, cv_folds, derive_seed(seed, "lambda"));
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  const Eigen::MatrixXd onehot = onehot_arms(data.arms, data.num_arms);
  const SolverConfig cfg = nuisance_solver_config();
  const std::vector<double> at{tuned.lambda};

  Eigen::MatrixXd prop = cross_fit(
      data.n(), data.num_arms, folds,
      [&](const std::vector<int>& train, const std::vector<int>& test,
          Eigen::MatrixXd& out) {
        const Eigen::MatrixXd xt_train = xtilde(train, Eigen::all);
        const Eigen::MatrixXd oh_train = onehot(train, Eigen::all);
        multinomial_path(xt_train, oh_train, at, cfg,
                         [&](size_t, const Eigen::MatrixXd& tau) {
                           const Eigen::MatrixXd p =
                               softmax_rows(xtilde(test, Eigen::all) * tau);
                           for (size_t i = 0; i < test.size(); ++i)
                             out.row(test[i]) = p.row(static_cast<int>(i));
                         });
      });
  for (int i = 0; i < prop.rows(); ++i) floor_simplex(prop.row(i), kPropensityFloor);
  return prop;
}

Eigen::MatrixXd fit_propensity_forest(const Dataset& data, const ForestParams& params,
                                      const Eigen::VectorXi& folds) {
  validate(data);
  Eigen::MatrixXd prop = cross_fit(
      data.n(), data.num_arms, folds,
      [&](const std::vector<int>& train, const std::vector<int>& test,
          Eigen::MatrixXd& out) {
        const Eigen::MatrixXd x_train = data.x(train, Eigen::all);
        const Eigen::MatrixXd x_test = data.x(test, Eigen::all);
        for (int a = 1; a <= data.num_arms; ++a) {
          Eigen::VectorXd target(static_cast<int>(train.size()));
          for (size_t i = 0; i < train.size(); ++i)
            target[static_cast<int>(i)] = data.arms[train[i]] == a ? 1.0 : 0.0;
          ForestParams tree_params = params;
          tree_params.seed = derive_seed(params.seed, static_cast<std::uint64_t>(a),
                                         "propensity");
          const RegressionForest forest = fit_forest(x_train, target, tree_params);
          const Eigen::VectorXd pred = forest.predict(x_test);
          for (size_t i = 0; i < test.size(); ++i)
            out(test[i], a - 1) = pred[static_cast<int>(i)];
        }
      });
  for (int i = 0; i < prop.rows(); ++i) floor_simplex(prop.row(i), kPropensityFloor);
  return prop;
}

TreatmentFreeModel fit_treatment_free(const Dataset& data, const Eigen::MatrixXd& propensity,
                                      const CodingMatrix& coding,
                                      const std::vector<double>& lambda_grid,
                                      int cv_folds, std::uint64_t seed) {
  validate(data);
  if (propensity.rows() != data.n() || propensity.cols() != data.num_arms)
    throw std::invalid_argument("fit_treatment_free: propensity must be n x K");
  if (propensity.minCoeff() < kPropensityFloor - 1e-12)
    throw std::invalid_argument("fit_treatment_free: propensities must respect the floor");
  const int d = data.p() + 1;
  const Eigen::MatrixXd design = joint_tf_design(data, coding);
  Eigen::VectorXd weights(data.n());
  for (int i = 0; i < data.n(); ++i) weights[i] = 1.0 / propensity(i, data.arms[i] - 1);
  std::vector<int> unpenalized{0};
  for (int k = 1; k < coding.num_arms; ++k) unpenalized.push_back(k * d);
  const SolverConfig cfg = nuisance_solver_config();

  const std::vector<int> all = index_range(data.n());
  const QuadraticProblem full = weighted_ls_problem(design, data.y, weights, all);
  std::vector<double> grid =
      lambda_grid.empty()
          ? geometric_grid(std::max(lambda_max_lasso(full, unpenalized), 1e-12), 1e-3, 50)
          : lambda_grid;

  int best = 0;
  if (grid.size() > 1) {
    const Eigen::VectorXi fold_of = make_folds(data.n(), cv_folds, derive_seed(seed, "cv"));
    std::vector<double> criterion(grid.size(), 0.0);
    for (int f = 0; f < cv_folds; ++f) {
      std::vector<int> train, valid;
      for (int i = 0; i < data.n(); ++i) (fold_of[i] == f ? valid : train).push_back(i);
      const QuadraticProblem sub = weighted_ls_problem(design, data.y, weights, train);
      const CoordinatePath path = quadratic_lasso_path(sub, unpenalized, cfg,
                                                       static_cast<int>(grid.size()), &grid);
      for (size_t g = 0; g < grid.size(); ++g) {
        double err = 0;
        for (int i : valid) {
          const double r = data.y[i] - design.row(i).dot(path.solutions[g]);
          err += weights[i] * r * r;
        }
        criterion[g] += err / static_cast<double>(valid.size()) / cv_folds;
      }
    }
    for (size_t g = 1; g < grid.size(); ++g)
      if (criterion[g] < criterion[best]) best = static_cast<int>(g);
  }

  const std::vector<double> head(grid.begin(), grid.begin() + best + 1);
  const CoordinatePath path =
      quadratic_lasso_path(full, unpenalized, cfg, static_cast<int>(head.size()), &head);
  TreatmentFreeModel model;
  model.lambda = grid[static_cast<size_t>(best)];
  model.eta = path.solutions.back().head(d);
  return model;
}

Eigen::VectorXd cross_fit_treatment_free(const Dataset& data,
                                         const Eigen::MatrixXd& propensity,
                                         const CodingMatrix& coding,
                                         const Eigen::VectorXi& folds, int cv_folds,
                                         std::uint64_t seed) {
  const TreatmentFreeModel tuned = fit_treatment_free(data, propensity, coding, {},
                                                      cv_folds, derive_seed(seed, "lambda"));
  const int d = data.p() + 1;
  const Eigen::MatrixXd design = joint_tf_design(data, coding);
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  Eigen::VectorXd weights(data.n());
  for (int i = 0; i < data.n(); ++i) weights[i] = 1.0 / propensity(i, data.arms[i] - 1);
  std::vector<int> unpenalized{0};
  for (int k = 1; k < coding.num_arms; ++k) unpenalized.push_back(k * d);
  const SolverConfig cfg = nuisance_solver_config();
  const std::vector<double> at{tuned.lambda};

  const Eigen::MatrixXd mu = cross_fit(
      data.n(), 1, folds,
      [&](const std::vector<int>& train, const std::vector<int>& test,
          Eigen::MatrixXd& out) {
        const QuadraticProblem sub = weighted_ls_problem(design, data.y, weights, train);
        const CoordinatePath path = quadratic_lasso_path(sub, unpenalized, cfg, 1, &at);
        const Eigen::VectorXd eta = path.solutions.back().head(d);
        for (int i : test) out(i, 0) = xtilde.row(i).dot(eta);
      });
  return mu.col(0);
}

Eigen::VectorXd fit_treatment_free_forest(const Dataset& data, const ForestParams& params,
                                          const Eigen::VectorXi& folds) {
  validate(data);
  const Eigen::MatrixXd mu = cross_fit(
      data.n(), 1, folds,
      [&](const std::vector<int>& train, const std::vector<int>& test,
          Eigen::MatrixXd& out) {
        const Eigen::MatrixXd x_test = data.x(test, Eigen::all);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<int>(test.size()));
        for (int a = 1; a <= data.num_arms; ++a) {
          std::vector<int> rows;
          for (int i : train)
            if (data.arms[i] == a) rows.push_back(i);
          if (rows.empty())
            throw DataError("fit_treatment_free_forest: arm " + std::to_string(a) +
                            " is absent from a training fold");
          ForestParams tree_params = params;
          tree_params.seed =
              derive_seed(params.seed, static_cast<std::uint64_t>(a), "treatment-free");
          const RegressionForest forest =
              fit_forest(data.x(rows, Eigen::all), data.y(rows), tree_params);
          acc += forest.predict(x_test);
        }
        acc /= static_cast<double>(data.num_arms);
        for (size_t i = 0; i < test.size(); ++i) out(test[i], 0) = acc[static_cast<int>(i)];
      });
  return mu.col(0);
}

Eigen::MatrixXd fit_variance(const Dataset& data, const Eigen::VectorXd& mu0,
                             const DecisionModel& pilot, const ForestParams& params) {
  validate(data);
  if (mu0.size() != data.n())
    throw std::invalid_argument("fit_variance: mu0 must have one entry per row");
  const int n = data.n();
  const int k = data.num_arms;
  const double shrink = 1.0 - 1.0 / k;
  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  const Eigen::MatrixXd f = xtilde * pilot.b;

  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    const double gamma = shrink * pilot.coding.vertices.row(data.arms[i] - 1).dot(f.row(i));
    const double resid = data.y[i] - mu0[i] - gamma;
    target[i] = resid * resid;
  }

  // covariates plus K-1 one-hot arm columns (arm 1 is the reference)
  Eigen::MatrixXd design(n, data.p() + k - 1);
  design.leftCols(data.p()) = data.x;
  design.rightCols(k - 1).setZero();
  for (int i = 0; i < n; ++i)
    if (data.arms[i] > 1) design(i, data.p() + data.arms[i] - 2) = 1.0;

  const RegressionForest forest = fit_forest(design, target, params);

  Eigen::MatrixXd sigma2(n, k);
  Eigen::RowVectorXd row(design.cols());
  for (int i = 0; i < n; ++i) {
    row.head(data.p()) = data.x.row(i);
    for (int a = 1; a <= k; ++a) {
      row.tail(k - 1).setZero();
      if (a > 1) row[data.p() + a - 2] = 1.0;
      sigma2(i, a - 1) = std::clamp(forest.predict_row(row), kVarianceFloor, kVarianceCap);
    }
  }
  return sigma2;
}

}  // namespace elearn
