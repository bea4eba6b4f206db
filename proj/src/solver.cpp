#include "elearn/solver.hpp"

#include <algorithm>
#include <cmath>

#include "elearn/errors.hpp"
#include "elearn/score.hpp"

namespace elearn {
namespace {

double composite_value(const ApgProblem& pb, const Eigen::VectorXd& x, double fx) {
  return fx + (pb.penalty ? pb.lambda * pb.penalty(x) : 0.0);
}

}  // namespace

ApgResult apg_minimize(const ApgProblem& pb, const SolverConfig& cfg, Eigen::VectorXd x0) {
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd y = x;
  double fx = pb.value(x);
  double big_f = composite_value(pb, x, fx);
  double step = cfg.initial_step;
  double momentum = 1.0;

  // proximal step from `at` with backtracking; shrinks `step` in place
  auto forward_backward = [&](const Eigen::VectorXd& at, double f_at,
                              const Eigen::VectorXd& g_at, Eigen::VectorXd& out,
                              double& f_out) {
    for (;;) {
      if (pb.prox)
        out = pb.prox(at - step * g_at, step * pb.lambda);
      else
        out = at - step * g_at;
      f_out = pb.value(out);
      const Eigen::VectorXd diff = out - at;
      const double quad = f_at + g_at.dot(diff) + diff.squaredNorm() / (2.0 * step);
      if (f_out <= quad + 1e-12 * (1.0 + std::abs(f_at))) return;
      step *= cfg.backtracking;
      if (step < 1e-20) throw NumericalError("apg_minimize: line search collapsed");
    }
  };

  ApgResult res;
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    Eigen::VectorXd z;
    double fz;
    forward_backward(y, pb.value(y), pb.gradient(y), z, fz);
    double big_fz = composite_value(pb, z, fz);
    if (cfg.restart && big_fz > big_f) {
      // momentum overshot: restart from the last accepted point, which the
      // descent property of the proximal step makes non-increasing
      momentum = 1.0;
      forward_backward(x, fx, pb.gradient(x), z, fz);
      big_fz = composite_value(pb, z, fz);
    }
    if (!std::isfinite(big_fz)) throw NumericalError("apg_minimize: objective diverged");
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    y = z + ((momentum - 1.0) / next_momentum) * (z - x);
    const bool done = std::abs(big_f - big_fz) <= cfg.tol * std::max(1.0, std::abs(big_f));
    x = std::move(z);
    fx = fz;
    big_f = big_fz;
    momentum = next_momentum;
    res.iterations = iter;
    if (pb.on_iterate) pb.on_iterate(iter, big_f);
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.objective = big_f;
  return res;
}

Eigen::MatrixXd prox_group_rows(const Eigen::MatrixXd& b, double threshold,
                                bool penalize_intercept) {
  Eigen::MatrixXd out = b;
  for (int j = penalize_intercept ? 0 : 1; j < b.rows(); ++j) {
    const double norm = b.row(j).norm();
    out.row(j) *= norm > threshold ? 1.0 - threshold / norm : 0.0;
  }
  return out;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double threshold,
                               const std::vector<int>& unpenalized) {
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    out[i] = a > threshold ? (v[i] > 0 ? a - threshold : threshold - a) : 0.0;
  }
  for (int i : unpenalized) out[i] = v[i];
  return out;
}

std::vector<double> geometric_grid(double max_value, double min_ratio, int size) {
  std::vector<double> grid(static_cast<size_t>(size));
  if (size == 1) {
    grid[0] = max_value;
    return grid;
  }
  const double ratio = std::pow(min_ratio, 1.0 / (size - 1));
  double v = max_value;
  for (int i = 0; i < size; ++i, v *= ratio) grid[static_cast<size_t>(i)] = v;
  return grid;
}

namespace {

// Null model: unpenalized rows solved with all penalized rows held at zero.
Eigen::VectorXd null_model(const QuadraticProblem& pb, int rows, int cols,
                           bool penalize_intercept) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(pb.b.size());
  if (penalize_intercept) return x;
  std::vector<int> free_idx;
  for (int k = 0; k < cols; ++k) free_idx.push_back(k * rows);
  Eigen::MatrixXd qff(free_idx.size(), free_idx.size());
  Eigen::VectorXd bf(free_idx.size());
  for (size_t r = 0; r < free_idx.size(); ++r) {
    bf[static_cast<int>(r)] = pb.b[free_idx[r]];
    for (size_t c = 0; c < free_idx.size(); ++c)
      qff(static_cast<int>(r), static_cast<int>(c)) = pb.q(free_idx[r], free_idx[c]);
  }
  const Eigen::VectorXd xf = qff.ldlt().solve(bf);
  for (size_t r = 0; r < free_idx.size(); ++r) x[free_idx[r]] = xf[static_cast<int>(r)];
  return x;
}

ApgProblem quadratic_apg_problem(const QuadraticProblem& pb, int rows, int cols,
                                 bool penalize_intercept, double lambda) {
  ApgProblem apg;
  apg.lambda = lambda;
  apg.value = [&pb](const Eigen::VectorXd& x) {
    return 0.5 * x.dot(pb.q * x) - pb.b.dot(x);
  };
  apg.gradient = [&pb](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return pb.q * x - pb.b;
  };
  apg.prox = [rows, cols, penalize_intercept](const Eigen::VectorXd& v,
                                              double t) -> Eigen::VectorXd {
    const Eigen::Map<const Eigen::MatrixXd> m(v.data(), rows, cols);
    const Eigen::MatrixXd shrunk = prox_group_rows(m, t, penalize_intercept);
    return Eigen::Map<const Eigen::VectorXd>(shrunk.data(), v.size());
  };
  apg.penalty = [rows, cols, penalize_intercept](const Eigen::VectorXd& v) {
    const Eigen::Map<const Eigen::MatrixXd> m(v.data(), rows, cols);
    double j = 0;
    for (int r = penalize_intercept ? 0 : 1; r < rows; ++r) j += m.row(r).norm();
    return j;
  };
  return apg;
}

}  // namespace

double lambda_max_group(const QuadraticProblem& pb, int rows, int cols,
                        bool penalize_intercept) {
  const Eigen::VectorXd x0 = null_model(pb, rows, cols, penalize_intercept);
  const Eigen::VectorXd g = pb.q * x0 - pb.b;
  const Eigen::Map<const Eigen::MatrixXd> gm(g.data(), rows, cols);
  double lmax = 0;
  for (int j = penalize_intercept ? 0 : 1; j < rows; ++j)
    lmax = std::max(lmax, gm.row(j).norm());
  return lmax;
}

double kkt_violation_group(const Eigen::MatrixXd& b, const QuadraticProblem& pb,
                           double lambda, bool penalize_intercept) {
  const Eigen::Map<const Eigen::VectorXd> vec(b.data(), b.size());
  const Eigen::VectorXd g = pb.q * vec - pb.b;
  const Eigen::Map<const Eigen::MatrixXd> gm(g.data(), b.rows(), b.cols());
  double viol = 0;
  for (int j = 0; j < b.rows(); ++j) {
    const bool penalized = penalize_intercept || j > 0;
    if (!penalized) {
      viol = std::max(viol, gm.row(j).norm());
    } else if (b.row(j).norm() == 0.0) {
      viol = std::max(viol, std::max(0.0, gm.row(j).norm() - lambda));
    } else {
      viol = std::max(viol,
                      (gm.row(j) + lambda * b.row(j) / b.row(j).norm()).norm());
    }
  }
  return viol;
}

LambdaPath quadratic_group_path(const QuadraticProblem& pb, int rows, int cols,
                                const SolverConfig& cfg, int grid_size,
                                const std::vector<double>* fixed_grid) {
  LambdaPath path;
  if (fixed_grid) {
    path.lambdas = *fixed_grid;
  } else {
    const double lmax =
        std::max(lambda_max_group(pb, rows, cols, cfg.penalize_intercept), 1e-12);
    path.lambdas = geometric_grid(lmax, 1e-3, grid_size);
  }
  path.solutions.reserve(path.lambdas.size());

  Eigen::VectorXd warm = null_model(pb, rows, cols, cfg.penalize_intercept);
  for (double lambda : path.lambdas) {
    ApgProblem apg = quadratic_apg_problem(pb, rows, cols, cfg.penalize_intercept, lambda);
    SolverConfig round_cfg = cfg;
    ApgResult res;
    for (int round = 0; round < 8; ++round) {
      res = apg_minimize(apg, round_cfg, warm);
      warm = res.x;
      path.iterations += res.iterations;
      const Eigen::Map<const Eigen::MatrixXd> bm(warm.data(), rows, cols);
      if (kkt_violation_group(bm, pb, lambda, cfg.penalize_intercept) <= cfg.kkt_target)
        break;
      round_cfg.tol *= 1e-2;  // polish: tighten until stationarity
    }
    path.solutions.emplace_back(Eigen::Map<const Eigen::MatrixXd>(warm.data(), rows, cols));
  }
  return path;
}

namespace {

Eigen::VectorXd lasso_null_model(const QuadraticProblem& pb,
                                 const std::vector<int>& unpenalized) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(pb.b.size());
  if (unpenalized.empty()) return x;
  const int m = static_cast<int>(unpenalized.size());
  Eigen::MatrixXd quu(m, m);
  Eigen::VectorXd bu(m);
  for (int r = 0; r < m; ++r) {
    bu[r] = pb.b[unpenalized[r]];
    for (int c = 0; c < m; ++c) quu(r, c) = pb.q(unpenalized[r], unpenalized[c]);
  }
  const Eigen::VectorXd xu = quu.ldlt().solve(bu);
  for (int r = 0; r < m; ++r) x[unpenalized[r]] = xu[r];
  return x;
}

}  // namespace

double lambda_max_lasso(const QuadraticProblem& pb, const std::vector<int>& unpenalized) {
  const Eigen::VectorXd x0 = lasso_null_model(pb, unpenalized);
  Eigen::VectorXd g = pb.q * x0 - pb.b;
  for (int i : unpenalized) g[i] = 0;
  return g.cwiseAbs().maxCoeff();
}

double kkt_violation_lasso(const Eigen::VectorXd& x, const QuadraticProblem& pb,
                           double lambda, const std::vector<int>& unpenalized) {
  const Eigen::VectorXd g = pb.q * x - pb.b;
  std::vector<char> exempt(static_cast<size_t>(x.size()), 0);
  for (int i : unpenalized) exempt[static_cast<size_t>(i)] = 1;
  double viol = 0;
  for (int i = 0; i < x.size(); ++i) {
    if (exempt[static_cast<size_t>(i)])
      viol = std::max(viol, std::abs(g[i]));
    else if (x[i] == 0.0)
      viol = std::max(viol, std::max(0.0, std::abs(g[i]) - lambda));
    else
      viol = std::max(viol, std::abs(g[i] + lambda * (x[i] > 0 ? 1.0 : -1.0)));
  }
  return viol;
}

CoordinatePath quadratic_lasso_path(const QuadraticProblem& pb,
                                    const std::vector<int>& unpenalized,
                                    const SolverConfig& cfg, int grid_size,
                                    const std::vector<double>* fixed_grid) {
  CoordinatePath path;
  if (fixed_grid)
    path.lambdas = *fixed_grid;
  else
    path.lambdas =
        geometric_grid(std::max(lambda_max_lasso(pb, unpenalized), 1e-12), 1e-3, grid_size);
  path.solutions.reserve(path.lambdas.size());

  ApgProblem apg;
  apg.value = [&pb](const Eigen::VectorXd& v) { return 0.5 * v.dot(pb.q * v) - pb.b.dot(v); };
  apg.gradient = [&pb](const Eigen::VectorXd& v) -> Eigen::VectorXd { return pb.q * v - pb.b; };
  apg.prox = [&unpenalized](const Eigen::VectorXd& v, double t) {
    return soft_threshold(v, t, unpenalized);
  };
  apg.penalty = [&unpenalized](const Eigen::VectorXd& v) {
    double j = v.lpNorm<1>();
    for (int i : unpenalized) j -= std::abs(v[i]);
    return j;
  };

  Eigen::VectorXd warm = lasso_null_model(pb, unpenalized);
  for (double lambda : path.lambdas) {
    apg.lambda = lambda;
    SolverConfig round_cfg = cfg;
    for (int round = 0; round < 8; ++round) {
      const ApgResult res = apg_minimize(apg, round_cfg, warm);
      warm = res.x;
      path.iterations += res.iterations;
      if (kkt_violation_lasso(warm, pb, lambda, unpenalized) <= cfg.kkt_target) break;
      round_cfg.tol *= 1e-2;
    }
    path.solutions.push_back(warm);
  }
  return path;
}

QuadraticProblem gee_quadratic(const Dataset& data, const CodingMatrix& coding,
                               const NuisanceFit& nuisance, const std::vector<int>& rows) {
  const Eigen::MatrixXd jac = jacobian_phi(data, coding, nuisance, rows);
  const Eigen::VectorXd rhs = rhs_phi(data, coding, nuisance, rows);
  QuadraticProblem pb;
  pb.q = jac.transpose() * jac;
  pb.b = jac.transpose() * rhs;
  return pb;
}

LambdaPath lambda_path(const Dataset& data, const CodingMatrix& coding,
                       const NuisanceFit& nuisance, const SolverConfig& cfg,
                       int grid_size) {
  const QuadraticProblem pb = gee_quadratic(data, coding, nuisance);
  return quadratic_group_path(pb, data.p() + 1, coding.num_arms - 1, cfg, grid_size);
}

double kkt_check(const DecisionModel& model, const Dataset& data,
                 const NuisanceFit& nuisance, double lambda, bool penalize_intercept) {
  const QuadraticProblem pb = gee_quadratic(data, model.coding, nuisance);
  return kkt_violation_group(model.b, pb, lambda, penalize_intercept);
}

TuneResult tune_by_ipwe(
    const Dataset& data, const CodingMatrix& coding, const NuisanceFit& nuisance,
    const std::function<QuadraticProblem(const std::vector<int>&)>& build_system,
    const SolverConfig& cfg, int grid_size, int folds, std::uint64_t seed) {
  const int n = data.n();
  const int rows = data.p() + 1;
  const int cols = coding.num_arms - 1;
  const Eigen::VectorXi fold_of = make_folds(n, folds, seed);

  const QuadraticProblem full = build_system({});
  TuneResult out;
  out.path = quadratic_group_path(full, rows, cols, cfg, grid_size);
  const std::vector<double>& grid = out.path.lambdas;
  out.path.criteria.assign(grid.size(), 0.0);

  const Eigen::MatrixXd xtilde = with_intercept(data.x);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, valid;
    for (int i = 0; i < n; ++i) (fold_of[i] == f ? valid : train).push_back(i);
    const QuadraticProblem sub = build_system(train);
    const LambdaPath fold_path =
        quadratic_group_path(sub, rows, cols, cfg, grid_size, &grid);
    for (size_t g = 0; g < grid.size(); ++g) {
      DecisionModel m{fold_path.solutions[g], coding};
      double value = 0;
      for (int i : valid) {
        const int arm = decide(m.b.transpose() * xtilde.row(i).transpose(), coding);
        if (arm == data.arms[i]) value += data.y[i] / nuisance.prop(i, arm - 1);
      }
      out.path.criteria[g] += value / static_cast<double>(valid.size()) / folds;
    }
  }

  int best = 0;
  for (size_t g = 1; g < grid.size(); ++g)
    if (out.path.criteria[g] > out.path.criteria[best]) best = static_cast<int>(g);
  out.lambda_index = best;
  out.lambda = grid[static_cast<size_t>(best)];
  out.b = out.path.solutions[static_cast<size_t>(best)];
  out.path.chosen = best;
  return out;
}

}  // namespace elearn
