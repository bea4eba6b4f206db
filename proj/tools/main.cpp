#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "elearn/csv.hpp"
#include "elearn/errors.hpp"
#include "elearn/eval.hpp"
#include "elearn/model_io.hpp"
#include "elearn/rng.hpp"
#include "elearn/threading.hpp"

namespace {

using namespace elearn;

struct CommonFlags {
  std::string method = "elearn";
  std::string variance = "forest";
  std::string propensity = "logistic";
  std::string tf = "linear";
  std::string basis = "linear";
  int folds = 10;
  int cv_folds = 5;
  int lambda_grid = 50;
  bool no_tune = false;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all cores
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_method) {
  if (with_method)
    cmd->add_option("--method", f.method, "elearn, rdlearn, dlearn or qlearn");
  cmd->add_option("--variance", f.variance, "forest, oracle or constant");
  cmd->add_option("--propensity", f.propensity, "logistic, forest, known or file");
  cmd->add_option("--tf", f.tf, "treatment-free model: linear, forest or zero");
  cmd->add_option("--basis", f.basis, "covariate basis: linear or cubic");
  cmd->add_option("--folds", f.folds, "cross-fitting and tuning folds");
  cmd->add_option("--cv-folds", f.cv_folds, "inner folds for nuisance tuning");
  cmd->add_option("--lambda-grid", f.lambda_grid, "penalty grid size");
  cmd->add_flag("--no-tune", f.no_tune, "skip penalty tuning (lambda = 0)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--threads", f.threads, "thread budget, 0 = all cores");
}

template <class Enum>
Enum parse_choice(const std::string& value, const std::string& flag,
                  std::initializer_list<std::pair<const char*, Enum>> table) {
  for (const auto& [name, v] : table)
    if (value == name) return v;
  throw std::invalid_argument(flag + ": unknown value '" + value + "'");
}

FitOptions options_from(const CommonFlags& f) {
  FitOptions opt;
  opt.variance = parse_choice<VarianceKind>(f.variance, "--variance",
                                            {{"forest", VarianceKind::Forest},
                                             {"oracle", VarianceKind::Oracle},
                                             {"constant", VarianceKind::Constant}});
  opt.propensity = parse_choice<PropensityKind>(f.propensity, "--propensity",
                                                {{"logistic", PropensityKind::Logistic},
                                                 {"forest", PropensityKind::Forest},
                                                 {"known", PropensityKind::Known},
                                                 {"file", PropensityKind::Supplied}});
  opt.treatment_free = parse_choice<TreatmentFreeKind>(
      f.tf, "--tf",
      {{"linear", TreatmentFreeKind::Linear},
       {"forest", TreatmentFreeKind::Forest},
       {"zero", TreatmentFreeKind::Zero}});
  opt.basis_degree = parse_choice<int>(f.basis, "--basis", {{"linear", 1}, {"cubic", 3}});
  opt.folds = f.folds;
  opt.cv_folds = f.cv_folds;
  opt.lambda_grid = f.lambda_grid;
  opt.tune = !f.no_tune;
  opt.seed = f.seed;
  opt.threads = f.threads > 0 ? f.threads : hardware_threads();
  return opt;
}

MethodKind method_kind(const std::string& token, FitOptions* opt) {
  if (token == "elearn") return MethodKind::ELearn;
  if (token == "elearn-oracle") {
    if (opt) opt->variance = VarianceKind::Oracle;
    return MethodKind::ELearn;
  }
  if (token == "elearn-constant") {
    if (opt) opt->variance = VarianceKind::Constant;
    return MethodKind::ELearn;
  }
  if (token == "rdlearn") return MethodKind::RDLearn;
  if (token == "dlearn") return MethodKind::DLearn;
  if (token == "qlearn") return MethodKind::QLearn;
  if (token == "random") return MethodKind::Random;
  throw std::invalid_argument("--method: unknown value '" + token + "'");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string token;
  for (char c : csv) {
    if (c == ',') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token += c;
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

// ---- benchmark -------------------------------------------------------------

struct BenchFlags {
  CommonFlags common;
  std::string preset;
  std::string methods = "elearn,elearn-oracle,rdlearn,dlearn,qlearn,random";
  int n = 400;
  int p = 10;
  int k = 3;
  int reps = 25;
  int test_size = 10000;
  bool tf_misspec = false;
  bool heteroscedastic = false;
  bool prop_misspec = false;
  std::string out = ".";
};

int cmd_benchmark(const BenchFlags& f) {
  std::vector<Scenario> scenarios;
  if (f.preset.empty()) {
    scenarios.push_back(make_scenario(f.n, f.p, f.k, f.tf_misspec, f.heteroscedastic,
                                      f.prop_misspec, derive_seed(f.common.seed, "truth")));
  } else if (f.preset == "table2-k3") {
    int cell = 0;
    for (int tf = 0; tf < 2; ++tf)
      for (int het = 0; het < 2; ++het)
        for (int pm = 0; pm < 2; ++pm)
          scenarios.push_back(make_scenario(
              f.n, f.p, 3, tf == 1, het == 1, pm == 1,
              derive_seed(f.common.seed, static_cast<std::uint64_t>(cell++), "truth")));
  } else {
    throw std::invalid_argument("--preset: unknown value '" + f.preset + "'");
  }

  std::vector<MethodSpec> methods;
  for (const std::string& token : split_list(f.methods)) {
    MethodSpec spec;
    spec.name = token;
    spec.options = options_from(f.common);
    spec.kind = method_kind(token, &spec.options);
    methods.push_back(std::move(spec));
  }
  if (methods.empty()) throw std::invalid_argument("--methods: empty list");

  BenchmarkConfig cfg;
  cfg.replications = f.reps;
  cfg.test_size = f.test_size;
  cfg.seed = f.common.seed;
  cfg.threads = f.common.threads > 0 ? f.common.threads : hardware_threads();

  const std::vector<EvalReport> reports = benchmark(scenarios, methods, cfg);

  std::filesystem::create_directories(f.out);
  const std::string csv_path = f.out + "/report.csv";
  const std::string json_path = f.out + "/report.json";
  {
    std::ofstream csv(csv_path);
    write_report_csv(reports, csv);
    std::ofstream json(json_path);
    write_report_json(reports, json);
  }

  std::string current;
  std::vector<const EvalReport*> block;
  auto flush = [&]() {
    if (block.empty()) return;
    std::sort(block.begin(), block.end(), [](const EvalReport* a, const EvalReport* b) {
      return a->mean_misclass < b->mean_misclass;
    });
    std::cout << current << "\n";
    for (const EvalReport* r : block) {
      std::cout << "  " << r->method << ": misclass " << format_double(r->mean_misclass)
                << " (se " << format_double(r->se_misclass) << "), regret "
                << format_double(r->mean_regret) << ", value "
                << format_double(r->mean_ipwe);
      if (r->failures > 0) std::cout << ", failures " << r->failures;
      std::cout << "\n";
    }
    block.clear();
  };
  for (const EvalReport& r : reports) {
    if (r.scenario != current) {
      flush();
      current = r.scenario;
    }
    block.push_back(&r);
  }
  flush();
  std::cout << "wrote " << csv_path << " and " << json_path << "\n";
  return 0;
}

// ---- fit / predict / simulate ----------------------------------------------

struct FitFlags {
  CommonFlags common;
  std::string data;
  std::string out = "model.json";
  std::string scenario_file;
  std::string propensity_file;
};

int cmd_fit(const FitFlags& f) {
  const Dataset data = read_dataset_csv(f.data);
  FitOptions opt = options_from(f.common);
  Scenario scenario;
  if (!f.scenario_file.empty()) {
    scenario = load_scenario(f.scenario_file);
    if (scenario.p != data.p())
      throw DataError("scenario has p=" + std::to_string(scenario.p) + " but " + f.data +
                      " has p=" + std::to_string(data.p()));
    opt.scenario = &scenario;
  }
  Eigen::MatrixXd supplied;
  if (opt.propensity == PropensityKind::Supplied) {
    if (f.propensity_file.empty())
      throw std::invalid_argument("--propensity file requires --propensity-file");
    supplied = read_matrix_csv(f.propensity_file);
    opt.supplied_propensity = &supplied;
  }
  if (opt.propensity == PropensityKind::Known && !opt.scenario)
    throw std::invalid_argument("--propensity known requires --scenario");
  if (opt.variance == VarianceKind::Oracle && !opt.scenario)
    throw std::invalid_argument("--variance oracle requires --scenario");

  ITRFit fit;
  switch (method_kind(f.common.method, &opt)) {
    case MethodKind::ELearn:
      fit = fit_elearning(data, opt);
      break;
    case MethodKind::RDLearn:
      fit = fit_rdlearning(data, opt);
      break;
    case MethodKind::DLearn:
      fit = fit_dlearning(data, opt);
      break;
    case MethodKind::QLearn:
      fit = fit_qlearning(data, opt);
      break;
    case MethodKind::Random:
      throw std::invalid_argument("--method: 'random' is benchmark-only");
  }
  save_model(fit, f.out);
  std::cout << fit.method << ": n=" << data.n() << " p=" << data.p()
            << " K=" << data.num_arms << " lambda=" << format_double(fit.lambda)
            << " kkt=" << format_double(fit.diagnostics.kkt)
            << " iterations=" << fit.diagnostics.iterations << "\n"
            << "wrote " << f.out << "\n";
  return 0;
}

struct PredictFlags {
  std::string model;
  std::string data;
  std::string out = "arms.csv";
};

int cmd_predict(const PredictFlags& f) {
  const ITRFit fit = load_model(f.model);
  const Eigen::MatrixXd x = read_matrix_csv(f.data);
  const Eigen::Index expanded =
      fit.basis_degree == 3 ? 3 * x.cols() : x.cols();
  if (expanded != fit.standardizer.mean.size())
    throw DataError(f.data + " has " + std::to_string(x.cols()) +
                    " covariates; the model expects " +
                    std::to_string(fit.basis_degree == 3
                                       ? fit.standardizer.mean.size() / 3
                                       : fit.standardizer.mean.size()));
  const Eigen::VectorXi arms = predict_itr(fit, x);
  write_arms_csv(arms, f.out);
  std::cout << "wrote " << f.out << " (" << arms.size() << " rows)\n";
  return 0;
}

struct SimulateFlags {
  int n = 400;
  int p = 10;
  int k = 3;
  bool tf_misspec = false;
  bool heteroscedastic = false;
  bool prop_misspec = false;
  std::uint64_t seed = 0;
  std::string scenario_file;
  std::string out = "data.csv";
  std::string scenario_out;
};

int cmd_simulate(const SimulateFlags& f) {
  Scenario s;
  if (!f.scenario_file.empty()) {
    s = load_scenario(f.scenario_file);
    s.n = f.n > 0 ? f.n : s.n;
  } else {
    s = make_scenario(f.n, f.p, f.k, f.tf_misspec, f.heteroscedastic, f.prop_misspec,
                      derive_seed(f.seed, "truth"));
  }
  const Dataset data = simulate(s, derive_seed(f.seed, "data"));
  write_dataset_csv(data, f.out);
  if (!f.scenario_out.empty()) save_scenario(s, f.scenario_out);
  std::cout << "wrote " << f.out << " (n=" << data.n() << ", p=" << data.p()
            << ", K=" << data.num_arms << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Individualized treatment rule estimation and benchmarks"};
  app.require_subcommand(1);

  BenchFlags bench;
  CLI::App* bench_cmd =
      app.add_subcommand("benchmark", "Monte-Carlo comparison on simulated scenarios");
  add_common(bench_cmd, bench.common, false);
  bench_cmd->add_option("--preset", bench.preset, "scenario grid preset: table2-k3");
  bench_cmd->add_option("--methods", bench.methods, "comma-separated method list");
  bench_cmd->add_option("--n", bench.n, "training size");
  bench_cmd->add_option("--p", bench.p, "covariate count");
  bench_cmd->add_option("--k", bench.k, "arm count (single-cell runs)");
  bench_cmd->add_option("--reps", bench.reps, "replications");
  bench_cmd->add_option("--test-size", bench.test_size, "evaluation draw size");
  bench_cmd->add_flag("--tf-misspec", bench.tf_misspec, "nonlinear treatment-free truth");
  bench_cmd->add_flag("--heteroscedastic", bench.heteroscedastic,
                      "covariate-dependent noise");
  bench_cmd->add_flag("--prop-misspec", bench.prop_misspec, "non-logistic assignment");
  bench_cmd->add_option("--out", bench.out, "output directory");

  FitFlags fitf;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a rule on a CSV dataset");
  add_common(fit_cmd, fitf.common, true);
  fit_cmd->add_option("--data", fitf.data, "input CSV (x1..xp,a,y)")->required();
  fit_cmd->add_option("--out", fitf.out, "output model JSON");
  fit_cmd->add_option("--scenario", fitf.scenario_file,
                      "scenario JSON for known propensity / oracle variance");
  fit_cmd->add_option("--propensity-file", fitf.propensity_file,
                      "n x K propensity CSV for --propensity file");

  PredictFlags predf;
  CLI::App* pred_cmd = app.add_subcommand("predict", "Recommend arms for covariates");
  pred_cmd->add_option("--model", predf.model, "model JSON from fit")->required();
  pred_cmd->add_option("--data", predf.data, "covariate CSV")->required();
  pred_cmd->add_option("--out", predf.out, "output arms CSV");

  SimulateFlags simf;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Draw a dataset from a scenario");
  sim_cmd->add_option("--n", simf.n, "rows");
  sim_cmd->add_option("--p", simf.p, "covariates");
  sim_cmd->add_option("--k", simf.k, "arms");
  sim_cmd->add_flag("--tf-misspec", simf.tf_misspec, "nonlinear treatment-free truth");
  sim_cmd->add_flag("--heteroscedastic", simf.heteroscedastic,
                    "covariate-dependent noise");
  sim_cmd->add_flag("--prop-misspec", simf.prop_misspec, "non-logistic assignment");
  sim_cmd->add_option("--seed", simf.seed, "master seed");
  sim_cmd->add_option("--scenario", simf.scenario_file, "scenario JSON to draw from");
  sim_cmd->add_option("--out", simf.out, "output CSV");
  sim_cmd->add_option("--scenario-out", simf.scenario_out, "also save the scenario JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*bench_cmd) return cmd_benchmark(bench);
    if (*fit_cmd) return cmd_fit(fitf);
    if (*pred_cmd) return cmd_predict(predf);
    if (*sim_cmd) return cmd_simulate(simf);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
