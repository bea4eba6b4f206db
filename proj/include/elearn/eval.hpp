#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "elearn/learners.hpp"
#include "elearn/scenario.hpp"

namespace elearn {

// Inverse-probability-weighted value of a rule on observed data:
// (1/n) sum 1{rule_i == a_i} y_i / prop(i, a_i).  Propensities must be
// floored by the caller.
double ipwe_value(const Dataset& data, const Eigen::VectorXi& rule,
                  const Eigen::MatrixXd& propensity);

enum class MethodKind { ELearn, RDLearn, DLearn, QLearn, Random };

// One benchmark entry: a fitter plus its options.  Per-replication seeds,
// the scenario pointer and thread budget are filled in by benchmark().
struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::ELearn;
  FitOptions options{};
};

struct BenchmarkConfig {
  int replications = 25;
  int test_size = 10000;
  std::uint64_t seed = 0;
  int threads = 1;  // replications run in parallel; fits stay serial then
};

// Per-(scenario, method) results.  Metric vectors have one slot per
// replication; failed replications hold NaN and are excluded from the
// means and standard errors.
struct EvalReport {
  std::string scenario;
  Scenario cell;
  std::string method;
  std::vector<double> regret;
  std::vector<double> misclass;
  std::vector<double> ipwe;
  std::vector<char> failed;
  int replications = 0;
  int failures = 0;
  double mean_regret = 0, se_regret = 0;
  double mean_misclass = 0, se_misclass = 0;
  double mean_ipwe = 0, se_ipwe = 0;
};

std::string scenario_label(const Scenario& s);

// Runs every method on every scenario for config.replications independent
// train/test draws.  Nuisance fits are shared between methods that request
// the same models; a fit failure marks the replication failed for that
// method only.  Deterministic given config.seed, including across thread
// counts.
std::vector<EvalReport> benchmark(const std::vector<Scenario>& scenarios,
                                  const std::vector<MethodSpec>& methods,
                                  const BenchmarkConfig& config);

// Long format: one row per (scenario, method, replication).
void write_report_csv(const std::vector<EvalReport>& reports, std::ostream& out);
// Aggregates only: means, standard errors, failure counts.
void write_report_json(const std::vector<EvalReport>& reports, std::ostream& out);

struct RegretBound {
  double regret = 0;
  double bound = 0;      // 2 max_k E|gamma_hat(X,k) - gamma(X,k)|
  double regret_se = 0;
  double bound_se = 0;
  bool holds = false;    // regret <= bound + 3 * combined Monte-Carlo SE
};

// Monte-Carlo check of the value-regret inequality on a fresh covariate
// draw of size test_size.
RegretBound regret_bound_check(const ITRFit& fit, const Scenario& scenario,
                               int test_size, std::uint64_t seed);

}  // namespace elearn
