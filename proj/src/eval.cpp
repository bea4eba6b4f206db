#include "elearn/eval.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

#include "elearn/csv.hpp"
#include "elearn/rng.hpp"
#include "elearn/threading.hpp"

namespace elearn {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Summary {
  double mean = 0;
  double se = 0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  int m = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s.mean += x;
      ++m;
    }
  if (m == 0) return s;
  s.mean /= m;
  if (m < 2) return s;
  double ss = 0;
  for (double x : v)
    if (std::isfinite(x)) ss += (x - s.mean) * (x - s.mean);
  s.se = std::sqrt(ss / (m - 1) / m);
  return s;
}

using NuisanceKey = std::tuple<int, int, int>;  // propensity, treatment-free, basis

NuisanceKey key_of(const FitOptions& opt) {
  return {static_cast<int>(opt.propensity), static_cast<int>(opt.treatment_free),
          opt.basis_degree};
}

ITRFit run_method(const MethodSpec& spec, const Dataset& train, const FitOptions& opt) {
  switch (spec.kind) {
    case MethodKind::ELearn:
      return fit_elearning(train, opt);
    case MethodKind::RDLearn:
      return fit_rdlearning(train, opt);
    case MethodKind::DLearn:
      return fit_dlearning(train, opt);
    case MethodKind::QLearn:
      return fit_qlearning(train, opt);
    case MethodKind::Random:
      break;
  }
  throw std::logic_error("run_method: not a fitted method");
}

// Uniform arms, reproducible per call so the tuning and evaluation draws
// of one replication agree.
TreatmentRule random_rule(int num_arms, std::uint64_t seed) {
  return [num_arms, seed](const Eigen::MatrixXd& x) {
    auto rng = make_rng(seed);
    std::uniform_int_distribution<int> pick(1, num_arms);
    Eigen::VectorXi arms(x.rows());
    for (int i = 0; i < arms.size(); ++i) arms[i] = pick(rng);
    return arms;
  };
}

struct RepResult {
  std::vector<double> regret, misclass, ipwe;
  std::vector<char> failed;
};

RepResult run_replication(const Scenario& scenario, const std::vector<MethodSpec>& methods,
                          const BenchmarkConfig& cfg, std::uint64_t rep_seed,
                          int fit_threads) {
  const size_t m = methods.size();
  RepResult res{std::vector<double>(m, kNaN), std::vector<double>(m, kNaN),
                std::vector<double>(m, kNaN), std::vector<char>(m, 0)};

  const Dataset train = simulate(scenario, derive_seed(rep_seed, "train"));
  Scenario test_cell = scenario;
  test_cell.n = cfg.test_size;
  const Dataset test = simulate(test_cell, derive_seed(rep_seed, "test"));
  Eigen::MatrixXd test_prop = true_propensity(scenario, test.x);
  for (int i = 0; i < test_prop.rows(); ++i)
    floor_simplex(test_prop.row(i), kPropensityFloor);
  const std::uint64_t eval_seed = derive_seed(rep_seed, "eval");
  const std::uint64_t fit_seed = derive_seed(rep_seed, "fit");

  // Nuisance models are shared between methods requesting the same kinds.
  // fit_dlearning zeroes the treatment-free effect itself, so it can borrow
  // an entry another method already needs.
  std::set<NuisanceKey> wanted;
  for (const MethodSpec& spec : methods)
    if (spec.kind == MethodKind::ELearn || spec.kind == MethodKind::RDLearn)
      wanted.insert(key_of(spec.options));
  std::map<NuisanceKey, NuisanceFit> cache;

  for (size_t j = 0; j < m; ++j) {
    const MethodSpec& spec = methods[j];
    TreatmentRule rule;
    if (spec.kind == MethodKind::Random) {
      rule = random_rule(scenario.num_arms, derive_seed(rep_seed, "random"));
    } else {
      FitOptions opt = spec.options;
      opt.seed = fit_seed;
      opt.threads = fit_threads;
      opt.scenario = &scenario;
      if (spec.kind != MethodKind::QLearn) {
        NuisanceKey key = key_of(opt);
        if (spec.kind == MethodKind::DLearn) {
          std::get<1>(key) = static_cast<int>(TreatmentFreeKind::Zero);
          NuisanceKey borrow = key_of(opt);
          std::get<1>(borrow) = static_cast<int>(TreatmentFreeKind::Linear);
          if (wanted.count(borrow)) key = borrow;
        }
        auto it = cache.find(key);
        if (it == cache.end()) {
          FitOptions nopt = opt;
          nopt.propensity = static_cast<PropensityKind>(std::get<0>(key));
          nopt.treatment_free = static_cast<TreatmentFreeKind>(std::get<1>(key));
          nopt.basis_degree = std::get<2>(key);
          try {
            it = cache.emplace(key, estimate_nuisances(train, nopt)).first;
          } catch (const std::exception&) {
            res.failed[j] = 1;
            continue;
          }
        }
        opt.precomputed = &it->second;
      }
      try {
        const ITRFit fit = run_method(spec, train, opt);
        rule = [fit](const Eigen::MatrixXd& x) { return predict_itr(fit, x); };
      } catch (const std::exception&) {
        res.failed[j] = 1;
        continue;
      }
    }
    const OracleEval oracle =
        oracle_regret_and_misclass(scenario, rule, cfg.test_size, eval_seed);
    res.regret[j] = oracle.regret;
    res.misclass[j] = oracle.misclass;
    res.ipwe[j] = ipwe_value(test, rule(test.x), test_prop);
  }
  return res;
}

}  // namespace

double ipwe_value(const Dataset& data, const Eigen::VectorXi& rule,
                  const Eigen::MatrixXd& propensity) {
  if (rule.size() != data.n())
    throw std::invalid_argument("ipwe_value: rule length does not match the data");
  if (propensity.rows() != data.n() || propensity.cols() != data.num_arms)
    throw std::invalid_argument("ipwe_value: propensity must be n x K");
  double total = 0;
  for (int i = 0; i < data.n(); ++i)
    if (rule[i] == data.arms[i]) total += data.y[i] / propensity(i, data.arms[i] - 1);
  return total / data.n();
}

std::string scenario_label(const Scenario& s) {
  std::string label = "k" + std::to_string(s.num_arms) + "_p" + std::to_string(s.p) +
                      "_n" + std::to_string(s.n);
  label += s.tf_misspec ? "_tfnl" : "_tflin";
  label += s.heteroscedastic ? "_het" : "_hom";
  label += s.prop_misspec ? "_pnl" : "_plog";
  return label;
}

std::vector<EvalReport> benchmark(const std::vector<Scenario>& scenarios,
                                  const std::vector<MethodSpec>& methods,
                                  const BenchmarkConfig& config) {
  if (config.replications < 1)
    throw std::invalid_argument("benchmark: need at least one replication");
  const int reps = config.replications;
  std::vector<EvalReport> reports;
  reports.reserve(scenarios.size() * methods.size());

  for (size_t s = 0; s < scenarios.size(); ++s) {
    const Scenario& scenario = scenarios[s];
    validate(scenario);
    std::vector<RepResult> results(static_cast<size_t>(reps));
    const std::uint64_t scen_seed = derive_seed(config.seed, s, "scenario");
    const int fit_threads = config.threads > 1 ? 1 : config.threads;
    parallel_for(0, reps, config.threads, [&](int r) {
      results[static_cast<size_t>(r)] =
          run_replication(scenario, methods, config,
                          derive_seed(scen_seed, static_cast<std::uint64_t>(r), "rep"),
                          fit_threads);
    });

    for (size_t j = 0; j < methods.size(); ++j) {
      EvalReport rep;
      rep.scenario = scenario_label(scenario);
      rep.cell = scenario;
      rep.method = methods[j].name;
      rep.replications = reps;
      for (int r = 0; r < reps; ++r) {
        const RepResult& rr = results[static_cast<size_t>(r)];
        rep.regret.push_back(rr.regret[j]);
        rep.misclass.push_back(rr.misclass[j]);
        rep.ipwe.push_back(rr.ipwe[j]);
        rep.failed.push_back(rr.failed[j]);
        rep.failures += rr.failed[j];
      }
      const Summary sr = summarize(rep.regret);
      const Summary sm = summarize(rep.misclass);
      const Summary sv = summarize(rep.ipwe);
      rep.mean_regret = sr.mean;
      rep.se_regret = sr.se;
      rep.mean_misclass = sm.mean;
      rep.se_misclass = sm.se;
      rep.mean_ipwe = sv.mean;
      rep.se_ipwe = sv.se;
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

void write_report_csv(const std::vector<EvalReport>& reports, std::ostream& out) {
  out << "scenario,k,p,n,tf_misspec,heteroscedastic,prop_misspec,method,"
         "replication,failed,regret,misclass,ipwe\n";
  for (const EvalReport& rep : reports) {
    for (size_t r = 0; r < rep.regret.size(); ++r) {
      out << rep.scenario << ',' << rep.cell.num_arms << ',' << rep.cell.p << ','
          << rep.cell.n << ',' << int(rep.cell.tf_misspec) << ','
          << int(rep.cell.heteroscedastic) << ',' << int(rep.cell.prop_misspec) << ','
          << rep.method << ',' << r << ',' << int(rep.failed[r]);
      if (rep.failed[r])
        out << ",,,";
      else
        out << ',' << format_double(rep.regret[r]) << ',' << format_double(rep.misclass[r])
            << ',' << format_double(rep.ipwe[r]);
      out << '\n';
    }
  }
}

void write_report_json(const std::vector<EvalReport>& reports, std::ostream& out) {
  out << "[\n";
  for (size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& rep = reports[i];
    out << "  {\"scenario\": \"" << rep.scenario << "\", \"method\": \"" << rep.method
        << "\", \"replications\": " << rep.replications
        << ", \"failures\": " << rep.failures
        << ", \"mean_regret\": " << format_double(rep.mean_regret)
        << ", \"se_regret\": " << format_double(rep.se_regret)
        << ", \"mean_misclass\": " << format_double(rep.mean_misclass)
        << ", \"se_misclass\": " << format_double(rep.se_misclass)
        << ", \"mean_ipwe\": " << format_double(rep.mean_ipwe)
        << ", \"se_ipwe\": " << format_double(rep.se_ipwe) << "}"
        << (i + 1 < reports.size() ? "," : "") << "\n";
  }
  out << "]\n";
}

RegretBound regret_bound_check(const ITRFit& fit, const Scenario& scenario,
                               int test_size, std::uint64_t seed) {
  const Eigen::MatrixXd x = draw_covariates(scenario, test_size, seed);
  const Eigen::MatrixXd gamma = true_interaction(scenario, x);
  const Eigen::MatrixXd gamma_hat = predict_interaction(fit, x);
  const Eigen::VectorXi rule = predict_itr(fit, x);

  Eigen::VectorXd gap(test_size);
  for (int i = 0; i < test_size; ++i) {
    int best = 0;
    for (int k = 1; k < scenario.num_arms; ++k)
      if (gamma(i, k) > gamma(i, best)) best = k;
    gap[i] = gamma(i, best) - gamma(i, rule[i] - 1);
  }
  RegretBound out;
  out.regret = gap.mean();
  out.regret_se = std::sqrt((gap.array() - out.regret).square().sum() /
                            (test_size - 1.0) / test_size);

  int worst = 0;
  Eigen::VectorXd err_means(scenario.num_arms);
  for (int k = 0; k < scenario.num_arms; ++k) {
    err_means[k] = (gamma_hat.col(k) - gamma.col(k)).cwiseAbs().mean();
    if (err_means[k] > err_means[worst]) worst = k;
  }
  const Eigen::VectorXd err = (gamma_hat.col(worst) - gamma.col(worst)).cwiseAbs();
  out.bound = 2.0 * err_means[worst];
  out.bound_se = 2.0 * std::sqrt((err.array() - err_means[worst]).square().sum() /
                                 (test_size - 1.0) / test_size);
  const double slack = 3.0 * std::sqrt(out.regret_se * out.regret_se +
                                       out.bound_se * out.bound_se);
  out.holds = out.regret <= out.bound + slack;
  return out;
}

}  // namespace elearn
