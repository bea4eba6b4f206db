#include "elearn/learners.hpp"

#include <cmath>
#include <numeric>

#include "elearn/errors.hpp"
#include "elearn/rng.hpp"

namespace elearn {
namespace {

struct Prepared {
  Dataset data;  // expanded + standardized covariates
  Standardizer standardizer;
  CodingMatrix coding;
};

Prepared prepare(const Dataset& raw, const FitOptions& opt) {
  validate(raw);
  Prepared prep;
  const Eigen::MatrixXd expanded = poly_expand(raw.x, opt.basis_degree);
  prep.standardizer = Standardizer::fit(expanded);
  prep.data.x = prep.standardizer.apply(expanded);
  prep.data.arms = raw.arms;
  prep.data.y = raw.y;
  prep.data.num_arms = raw.num_arms;
  prep.coding = build_coding(raw.num_arms);
  return prep;
}

Eigen::MatrixXd floored_rows(Eigen::MatrixXd prop) {
  for (int i = 0; i < prop.rows(); ++i) floor_simplex(prop.row(i), kPropensityFloor);
  return prop;
}

NuisanceFit nuisances_for(const Dataset& raw, const Prepared& prep, const FitOptions& opt) {
  if (opt.precomputed) {
    if (opt.precomputed->prop.rows() != raw.n())
      throw std::invalid_argument("precomputed nuisances do not match the data");
    NuisanceFit nus = *opt.precomputed;
    nus.sigma2 = Eigen::MatrixXd::Ones(raw.n(), raw.num_arms);
    return nus;
  }

  NuisanceFit nus;
  nus.folds = make_folds(raw.n(), opt.folds, derive_seed(opt.seed, "folds"));
  switch (opt.propensity) {
    case PropensityKind::Logistic:
      nus.prop = cross_fit_propensity_logistic(prep.data, nus.folds, opt.cv_folds,
                                               derive_seed(opt.seed, "propensity"));
      break;
    case PropensityKind::Forest: {
      ForestParams params = opt.forest;
      params.seed = derive_seed(opt.seed, "propensity-forest");
      params.threads = opt.threads;
      nus.prop = fit_propensity_forest(prep.data, params, nus.folds);
      break;
    }
    case PropensityKind::Known:
      if (!opt.scenario)
        throw std::invalid_argument("known propensity requires a scenario");
      nus.prop = floored_rows(true_propensity(*opt.scenario, raw.x));
      break;
    case PropensityKind::Supplied:
      if (!opt.supplied_propensity)
        throw std::invalid_argument("supplied propensity matrix is missing");
      if (opt.supplied_propensity->rows() != raw.n() ||
          opt.supplied_propensity->cols() != raw.num_arms)
        throw std::invalid_argument("supplied propensity must be n x K");
      nus.prop = floored_rows(*opt.supplied_propensity);
      break;
  }

  switch (opt.treatment_free) {
    case TreatmentFreeKind::Linear:
      nus.mu0 = cross_fit_treatment_free(prep.data, nus.prop, prep.coding, nus.folds,
                                         opt.cv_folds, derive_seed(opt.seed, "tf"));
      break;
    case TreatmentFreeKind::Forest: {
      ForestParams params = opt.forest;
      params.seed = derive_seed(opt.seed, "tf-forest");
      params.threads = opt.threads;
      nus.mu0 = fit_treatment_free_forest(prep.data, params, nus.folds);
      break;
    }
    case TreatmentFreeKind::Zero:
      nus.mu0 = Eigen::VectorXd::Zero(raw.n());
      break;
  }
  nus.sigma2 = Eigen::MatrixXd::Ones(raw.n(), raw.num_arms);
  return nus;
}

struct SolveOut {
  Eigen::MatrixXd b;
  double lambda = 0;
  int lambda_index = -1;
  double kkt = 0;
  int iterations = 0;
};

SolveOut solve_gee(const Dataset& data, const CodingMatrix& coding,
                   const NuisanceFit& nus, const FitOptions& opt,
                   std::uint64_t tune_seed) {
  SolveOut out;
  if (!opt.tune) {
    const DecisionModel m = solve_unpenalized(data, coding, nus);
    out.b = m.b;
    out.kkt = kkt_check(m, data, nus, 0.0);
    return out;
  }
  const auto builder = [&](const std::vector<int>& rows) {
    return gee_quadratic(data, coding, nus, rows);
  };
  const TuneResult tuned = tune_by_ipwe(data, coding, nus, builder, opt.solver,
                                        opt.lambda_grid, opt.folds, tune_seed);
  out.b = tuned.b;
  out.lambda = tuned.lambda;
  out.lambda_index = tuned.lambda_index;
  out.iterations = tuned.path.iterations;
  DecisionModel m{tuned.b, coding};
  out.kkt = kkt_check(m, data, nus, tuned.lambda);
  return out;
}

Eigen::MatrixXd oracle_sigma2(const Dataset& raw, const Eigen::VectorXd& mu0_hat,
                              const Scenario& scenario) {
  const Eigen::VectorXd gap = mu0_hat - true_treatment_free(scenario, raw.x);
  Eigen::MatrixXd sigma2 = true_sigma2(scenario, raw.x);
  sigma2.colwise() += gap.cwiseAbs2();
  return sigma2.cwiseMax(kVarianceFloor).cwiseMin(kVarianceCap);
}

ITRFit package(const std::string& method, const Prepared& prep, const SolveOut& solved,
               NuisanceFit nus, const FitOptions& opt) {
  ITRFit fit;
  fit.method = method;
  fit.model = DecisionModel{solved.b, prep.coding};
  fit.standardizer = prep.standardizer;
  fit.basis_degree = opt.basis_degree;
  fit.lambda = solved.lambda;
  fit.nuisance = std::move(nus);
  fit.diagnostics.kkt = solved.kkt;
  fit.diagnostics.iterations = solved.iterations;
  fit.diagnostics.lambda_index = solved.lambda_index;
  if (opt.compute_sandwich)
    fit.diagnostics.sandwich = sandwich(prep.data, fit.model, fit.nuisance);
  return fit;
}

ITRFit fit_angle_based(const Dataset& raw, const FitOptions& opt, bool variance_steps) {
  const Prepared prep = prepare(raw, opt);
  NuisanceFit nus = nuisances_for(raw, prep, opt);

  const SolveOut pilot = solve_gee(prep.data, prep.coding, nus, opt,
                                   derive_seed(opt.seed, "tune-pilot"));
  if (!variance_steps)
    return package("rdlearn", prep, pilot, std::move(nus), opt);

  switch (opt.variance) {
    case VarianceKind::Constant:
      // unit working variance: the reweighted solve would reproduce the
      // pilot, so return it directly
      return package("elearn", prep, pilot, std::move(nus), opt);
    case VarianceKind::Forest: {
      ForestParams params = opt.forest;
      params.seed = derive_seed(opt.seed, "variance-forest");
      params.threads = opt.threads;
      nus.sigma2 =
          fit_variance(prep.data, nus.mu0, DecisionModel{pilot.b, prep.coding}, params);
      break;
    }
    case VarianceKind::Oracle:
      if (!opt.scenario)
        throw std::invalid_argument("oracle variance requires a scenario");
      nus.sigma2 = oracle_sigma2(raw, nus.mu0, *opt.scenario);
      break;
  }

  const SolveOut final_solve = solve_gee(prep.data, prep.coding, nus, opt,
                                         derive_seed(opt.seed, "tune-final"));
  return package("elearn", prep, final_solve, std::move(nus), opt);
}

// Design for the outcome regression: (1, x, dummies, dummies (x) x) with
// dummy k = 1{arm == k+1}, k = 1..K-1.
Eigen::MatrixXd qlearn_design(const Eigen::MatrixXd& x, const Eigen::VectorXi& arms,
                              int num_arms) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, (p + 1) * num_arms);
  z.col(0).setOnes();
  z.middleCols(1, p) = x;
  for (int i = 0; i < n; ++i) {
    const int a = arms[i];
    if (a == 1) continue;
    const int block = p + 1 + (a - 2) * (p + 1);
    z(i, block) = 1.0;
    z.block(i, block + 1, 1, p) = x.row(i);
  }
  return z;
}

}  // namespace

NuisanceFit estimate_nuisances(const Dataset& data, const FitOptions& opt) {
  const Prepared prep = prepare(data, opt);
  return nuisances_for(data, prep, opt);
}

ITRFit fit_elearning(const Dataset& data, const FitOptions& opt) {
  return fit_angle_based(data, opt, true);
}

ITRFit fit_rdlearning(const Dataset& data, const FitOptions& opt) {
  return fit_angle_based(data, opt, false);
}

ITRFit fit_dlearning(const Dataset& data, const FitOptions& options) {
  FitOptions opt = options;
  opt.treatment_free = TreatmentFreeKind::Zero;  // no treatment-free model
  const Prepared prep = prepare(data, opt);
  NuisanceFit nus = nuisances_for(data, prep, opt);
  nus.mu0.setZero();

  const int n = data.n();
  const int d = prep.data.p() + 1;
  const int k = data.num_arms;
  const int km1 = k - 1;
  const Eigen::MatrixXd xtilde = with_intercept(prep.data.x);

  const auto builder = [&](const std::vector<int>& rows) {
    std::vector<int> idx = rows;
    if (idx.empty()) {
      idx.resize(static_cast<size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
    }
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d * km1);
    for (int i : idx) {
      const double w = 1.0 / nus.prop(i, data.arms[i] - 1);
      gram.noalias() += (w / k) * xtilde.row(i).transpose() * xtilde.row(i);
      const Eigen::RowVectorXd vertex = prep.coding.vertices.row(data.arms[i] - 1);
      for (int c = 0; c < km1; ++c)
        rhs.segment(c * d, d) += (w * data.y[i] * vertex[c]) * xtilde.row(i).transpose();
    }
    gram /= static_cast<double>(idx.size());
    rhs /= static_cast<double>(idx.size());
    QuadraticProblem pb;
    pb.q = Eigen::MatrixXd::Zero(d * km1, d * km1);
    for (int c = 0; c < km1; ++c) pb.q.block(c * d, c * d, d, d) = gram;
    pb.b = rhs;
    return pb;
  };

  SolveOut solved;
  if (opt.tune) {
    const TuneResult tuned = tune_by_ipwe(prep.data, prep.coding, nus, builder, opt.solver,
                                          opt.lambda_grid, opt.folds,
                                          derive_seed(opt.seed, "tune-dlearn"));
    solved.b = tuned.b;
    solved.lambda = tuned.lambda;
    solved.lambda_index = tuned.lambda_index;
    solved.iterations = tuned.path.iterations;
    solved.kkt = kkt_violation_group(tuned.b, builder({}), tuned.lambda, false);
  } else {
    const QuadraticProblem pb = builder({});
    Eigen::FullPivLU<Eigen::MatrixXd> lu(pb.q);
    if (!lu.isInvertible())
      throw NumericalError("fit_dlearning: singular weighted design");
    const Eigen::VectorXd vec = lu.solve(pb.b);
    solved.b = Eigen::Map<const Eigen::MatrixXd>(vec.data(), d, km1);
    solved.kkt = kkt_violation_group(solved.b, pb, 0.0, false);
  }
  FitOptions packaged = opt;
  packaged.compute_sandwich = false;  // variance formula targets the efficient score
  return package("dlearn", prep, solved, std::move(nus), packaged);
}

ITRFit fit_qlearning(const Dataset& data, const FitOptions& opt) {
  const Prepared prep = prepare(data, opt);
  const int n = data.n();
  const int k = data.num_arms;
  const int d = prep.data.p() + 1;
  const Eigen::MatrixXd z = qlearn_design(prep.data.x, data.arms, k);
  const int dim = static_cast<int>(z.cols());

  const auto problem_on = [&](const std::vector<int>& rows) {
    QuadraticProblem pb;
    pb.q = Eigen::MatrixXd::Zero(dim, dim);
    pb.b = Eigen::VectorXd::Zero(dim);
    for (int i : rows) {
      pb.q.noalias() += z.row(i).transpose() * z.row(i);
      pb.b.noalias() += data.y[i] * z.row(i).transpose();
    }
    pb.q /= static_cast<double>(rows.size());
    pb.b /= static_cast<double>(rows.size());
    return pb;
  };
  std::vector<int> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const QuadraticProblem full = problem_on(all);
  const std::vector<int> unpenalized{0};

  Eigen::VectorXd theta;
  SolveOut solved;
  if (opt.tune) {
    const SolverConfig cfg = opt.solver;
    const std::vector<double> grid = geometric_grid(
        std::max(lambda_max_lasso(full, unpenalized), 1e-12), 1e-3, opt.lambda_grid);
    const Eigen::VectorXi fold_of =
        make_folds(n, opt.folds, derive_seed(opt.seed, "qlearn-cv"));
    std::vector<double> criterion(grid.size(), 0.0);
    for (int f = 0; f < opt.folds; ++f) {
      std::vector<int> train, valid;
      for (int i = 0; i < n; ++i) (fold_of[i] == f ? valid : train).push_back(i);
      if (valid.empty() || train.empty()) continue;
      const CoordinatePath path = quadratic_lasso_path(
          problem_on(train), unpenalized, cfg, static_cast<int>(grid.size()), &grid);
      for (size_t g = 0; g < grid.size(); ++g) {
        double err = 0;
        for (int i : valid) {
          const double r = data.y[i] - z.row(i).dot(path.solutions[g]);
          err += r * r;
        }
        criterion[g] += err / static_cast<double>(valid.size()) / opt.folds;
      }
    }
    int best = 0;
    for (size_t g = 1; g < grid.size(); ++g)
      if (criterion[g] < criterion[best]) best = static_cast<int>(g);
    const std::vector<double> head(grid.begin(), grid.begin() + best + 1);
    const CoordinatePath path = quadratic_lasso_path(full, unpenalized, cfg,
                                                     static_cast<int>(head.size()), &head);
    theta = path.solutions.back();
    solved.lambda = grid[static_cast<size_t>(best)];
    solved.lambda_index = best;
    solved.iterations = path.iterations;
    solved.kkt = kkt_violation_lasso(theta, full, solved.lambda, unpenalized);
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(full.q);
    if (!lu.isInvertible())
      throw NumericalError("fit_qlearning: singular outcome design");
    theta = lu.solve(full.b);
    solved.kkt = kkt_violation_lasso(theta, full, 0.0, unpenalized);
  }

  // per-arm mean coefficients: shared block plus the arm's dummy block
  Eigen::MatrixXd per_arm = Eigen::MatrixXd::Zero(d, k);
  for (int a = 0; a < k; ++a) {
    per_arm.col(a) = theta.head(d);
    if (a > 0) per_arm.col(a) += theta.segment(d + (a - 1) * d, d);
  }
  Eigen::MatrixXd centered = per_arm;
  centered.colwise() -= per_arm.rowwise().mean();
  // re-express the centered means as an angle-based decision function; the
  // conversion is exact because the vertex rows span the centered subspace
  const Eigen::MatrixXd bw = centered * prep.coding.vertices;
  solved.b = prep.coding.gram.ldlt().solve(bw.transpose()).transpose();

  NuisanceFit nus;  // the outcome regression uses no nuisance models
  nus.mu0 = Eigen::VectorXd::Zero(n);
  nus.prop = Eigen::MatrixXd::Constant(n, k, 1.0 / k);
  nus.sigma2 = Eigen::MatrixXd::Ones(n, k);
  FitOptions packaged = opt;
  packaged.compute_sandwich = false;
  return package("qlearn", prep, solved, std::move(nus), packaged);
}

Eigen::VectorXi predict_itr(const ITRFit& fit, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd design =
      fit.standardizer.apply(poly_expand(x, fit.basis_degree));
  return decide_all(fit.model, with_intercept(design));
}

Eigen::MatrixXd predict_interaction(const ITRFit& fit, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd design =
      fit.standardizer.apply(poly_expand(x, fit.basis_degree));
  return interaction_values(fit.model, with_intercept(design));
}

Eigen::MatrixXd predict_decision(const ITRFit& fit, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd design =
      fit.standardizer.apply(poly_expand(x, fit.basis_degree));
  return decision_values(fit.model, with_intercept(design));
}

}  // namespace elearn
