#include "elearn/score.hpp"

#include <numeric>

#include "elearn/errors.hpp"

namespace elearn {
namespace {

std::vector<int> all_rows(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Per-observation weight vector u = G V^{-1} w_a / prop_a shared by the
// estimating function, its jacobian and the rhs.
Eigen::VectorXd score_weight(const CodingMatrix& coding, const Eigen::VectorXd& sigma2_row,
                             const Eigen::VectorXd& prop_row, int arm) {
  const VEpsMatrix v = v_eps(sigma2_row, prop_row, coding);
  return coding.gram * (v.vinv * coding.vertices.row(arm - 1).transpose()) /
         prop_row[arm - 1];
}

}  // namespace

Eigen::MatrixXd decision_values(const DecisionModel& model, const Eigen::MatrixXd& xtilde) {
  return xtilde * model.b;
}

Eigen::MatrixXd interaction_values(const DecisionModel& model, const Eigen::MatrixXd& xtilde) {
  const double shrink = 1.0 - 1.0 / model.coding.num_arms;
  return shrink * (xtilde * model.b) * model.coding.vertices.transpose();
}

Eigen::VectorXi decide_all(const DecisionModel& model, const Eigen::MatrixXd& xtilde) {
  const Eigen::MatrixXd scores = (xtilde * model.b) * model.coding.vertices.transpose();
  Eigen::VectorXi arms(scores.rows());
  for (int i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < model.coding.num_arms; ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    arms[i] = best + 1;
  }
  return arms;
}

VEpsMatrix v_eps(const Eigen::VectorXd& sigma2_row, const Eigen::VectorXd& prop_row,
                 const CodingMatrix& coding) {
  const int k = coding.num_arms;
  if (sigma2_row.size() != k || prop_row.size() != k)
    throw std::invalid_argument("v_eps: need one variance and one propensity per arm");
  VEpsMatrix out;
  out.v = Eigen::MatrixXd::Zero(k - 1, k - 1);
  for (int a = 0; a < k; ++a) {
    if (prop_row[a] <= 0)
      throw std::invalid_argument("v_eps: propensities must be positive");
    out.v.noalias() += (sigma2_row[a] / prop_row[a]) *
                       (coding.vertices.row(a).transpose() * coding.vertices.row(a));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.v);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double cutoff = 1e-10 * vals.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(k - 1);
  for (int i = 0; i < k - 1; ++i)
    if (vals[i] > cutoff) inv[i] = 1.0 / vals[i];
  out.vinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

Eigen::VectorXd phi_eff(const Eigen::VectorXd& xtilde, int arm, double y,
                        const DecisionModel& model, double mu0,
                        const Eigen::VectorXd& prop_row, const Eigen::VectorXd& sigma2_row) {
  const CodingMatrix& coding = model.coding;
  const int km1 = coding.num_arms - 1;
  const double shrink = 1.0 - 1.0 / coding.num_arms;
  const double fit = coding.vertices.row(arm - 1).dot(model.b.transpose() * xtilde);
  const double resid = y - mu0 - shrink * fit;
  const Eigen::VectorXd u = score_weight(coding, sigma2_row, prop_row, arm);
  Eigen::VectorXd out(km1 * xtilde.size());
  for (int k = 0; k < km1; ++k)
    out.segment(k * xtilde.size(), xtilde.size()) = resid * u[k] * xtilde;
  return out;
}

Eigen::VectorXd mean_phi(const Dataset& data, const DecisionModel& model,
                         const NuisanceFit& nuisance, const std::vector<int>& rows) {
  const std::vector<int> idx = rows.empty() ? all_rows(data.n()) : rows;
  const CodingMatrix& coding = model.coding;
  const int d = data.p() + 1;
  const int km1 = coding.num_arms - 1;
  const double shrink = 1.0 - 1.0 / coding.num_arms;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(km1 * d);
  Eigen::VectorXd xt(d);
  for (int i : idx) {
    xt[0] = 1.0;
    xt.tail(d - 1) = data.x.row(i);
    const int arm = data.arms[i];
    const double fit = coding.vertices.row(arm - 1).dot(model.b.transpose() * xt);
    const double resid = data.y[i] - nuisance.mu0[i] - shrink * fit;
    const Eigen::VectorXd u =
        score_weight(coding, nuisance.sigma2.row(i), nuisance.prop.row(i), arm);
    for (int k = 0; k < km1; ++k) acc.segment(k * d, d) += resid * u[k] * xt;
  }
  return acc / static_cast<double>(idx.size());
}

Eigen::MatrixXd jacobian_phi(const Dataset& data, const CodingMatrix& coding,
                             const NuisanceFit& nuisance, const std::vector<int>& rows) {
  const std::vector<int> idx = rows.empty() ? all_rows(data.n()) : rows;
  const int d = data.p() + 1;
  const int km1 = coding.num_arms - 1;
  const double shrink = 1.0 - 1.0 / coding.num_arms;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(km1 * d, km1 * d);
  Eigen::VectorXd xt(d);
  Eigen::MatrixXd outer(d, d);
  for (int i : idx) {
    xt[0] = 1.0;
    xt.tail(d - 1) = data.x.row(i);
    const int arm = data.arms[i];
    const Eigen::VectorXd u =
        score_weight(coding, nuisance.sigma2.row(i), nuisance.prop.row(i), arm);
    const Eigen::RowVectorXd w = coding.vertices.row(arm - 1);
    outer.noalias() = xt * xt.transpose();
    // block (r, c) of the Kronecker form: shrink * u_r * w_c * xt xt^T
    for (int r = 0; r < km1; ++r)
      for (int c = 0; c < km1; ++c)
        acc.block(r * d, c * d, d, d) += (shrink * u[r] * w[c]) * outer;
  }
  return acc / static_cast<double>(idx.size());
}

Eigen::VectorXd rhs_phi(const Dataset& data, const CodingMatrix& coding,
                        const NuisanceFit& nuisance, const std::vector<int>& rows) {
  const std::vector<int> idx = rows.empty() ? all_rows(data.n()) : rows;
  const int d = data.p() + 1;
  const int km1 = coding.num_arms - 1;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(km1 * d);
  Eigen::VectorXd xt(d);
  for (int i : idx) {
    xt[0] = 1.0;
    xt.tail(d - 1) = data.x.row(i);
    const int arm = data.arms[i];
    const double resid = data.y[i] - nuisance.mu0[i];
    const Eigen::VectorXd u =
        score_weight(coding, nuisance.sigma2.row(i), nuisance.prop.row(i), arm);
    for (int k = 0; k < km1; ++k) acc.segment(k * d, d) += resid * u[k] * xt;
  }
  return acc / static_cast<double>(idx.size());
}

Eigen::MatrixXd information(const Dataset& data, const CodingMatrix& coding,
                            const NuisanceFit& nuisance) {
  const int n = data.n();
  const int d = data.p() + 1;
  const int km1 = coding.num_arms - 1;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(km1 * d, km1 * d);
  Eigen::VectorXd xt(d);
  Eigen::MatrixXd outer(d, d);
  for (int i = 0; i < n; ++i) {
    xt[0] = 1.0;
    xt.tail(d - 1) = data.x.row(i);
    const VEpsMatrix v = v_eps(nuisance.sigma2.row(i), nuisance.prop.row(i), coding);
    const Eigen::MatrixXd core = coding.gram * v.vinv * coding.gram;
    outer.noalias() = xt * xt.transpose();
    for (int r = 0; r < km1; ++r)
      for (int c = 0; c < km1; ++c)
        acc.block(r * d, c * d, d, d) += core(r, c) * outer;
  }
  return acc / static_cast<double>(n);
}

SandwichVariance sandwich(const Dataset& data, const DecisionModel& model,
                          const NuisanceFit& nuisance) {
  const int n = data.n();
  SandwichVariance out;
  const Eigen::MatrixXd jac = jacobian_phi(data, model.coding, nuisance);
  out.bread = 0.5 * (jac + jac.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.bread);
  if (eig.eigenvalues().minCoeff() <= 0)
    throw NumericalError(
        "sandwich: information matrix is not positive definite; "
        "consider more data or a penalized fit");

  const int d = data.p() + 1;
  out.meat = Eigen::MatrixXd::Zero(out.bread.rows(), out.bread.cols());
  Eigen::VectorXd xt(d);
  for (int i = 0; i < n; ++i) {
    xt[0] = 1.0;
    xt.tail(d - 1) = data.x.row(i);
    const Eigen::VectorXd phi =
        phi_eff(xt, data.arms[i], data.y[i], model, nuisance.mu0[i],
                nuisance.prop.row(i), nuisance.sigma2.row(i));
    out.meat.noalias() += phi * phi.transpose();
  }
  out.meat /= static_cast<double>(n);

  const Eigen::MatrixXd bread_inv = out.bread.ldlt().solve(
      Eigen::MatrixXd::Identity(out.bread.rows(), out.bread.cols()));
  out.sandwich = bread_inv * out.meat * bread_inv;
  return out;
}

DecisionModel solve_unpenalized(const Dataset& data, const CodingMatrix& coding,
                                const NuisanceFit& nuisance) {
  const Eigen::MatrixXd jac = jacobian_phi(data, coding, nuisance);
  const Eigen::VectorXd rhs = rhs_phi(data, coding, nuisance);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
  if (!lu.isInvertible())
    throw NumericalError(
        "solve_unpenalized: singular estimating-equation jacobian; "
        "the design may be collinear or an arm unobserved");
  const Eigen::VectorXd vec = lu.solve(rhs);
  DecisionModel model;
  model.coding = coding;
  model.b = Eigen::Map<const Eigen::MatrixXd>(vec.data(), data.p() + 1,
                                              coding.num_arms - 1);
  return model;
}

}  // namespace elearn
