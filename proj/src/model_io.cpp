#include "elearn/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "elearn/errors.hpp"

namespace elearn {
namespace {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw DataError(field + ": expected an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw DataError(field + ": ragged rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw DataError(field + ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j, const std::string& field) {
  if (!j.is_array()) throw DataError(field + ": expected an array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[i].is_number()) throw DataError(field + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

json parse_file(const std::string& path, const std::string& format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != format)
    throw DataError(path + ": not a " + format + " file");
  if (j.value("version", 0) != 1)
    throw DataError(path + ": unsupported version");
  return j;
}

void write_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace

void save_model(const ITRFit& fit, const std::string& path) {
  json j;
  j["format"] = "itr-model";
  j["version"] = 1;
  j["method"] = fit.method;
  j["num_arms"] = fit.model.coding.num_arms;
  j["basis_degree"] = fit.basis_degree;
  const int expanded = static_cast<int>(fit.standardizer.mean.size());
  j["p_raw"] = fit.basis_degree == 3 ? expanded / 3 : expanded;
  j["standardizer"] = {{"mean", to_json(fit.standardizer.mean)},
                       {"scale", to_json(fit.standardizer.scale)}};
  j["coefficients"] = to_json(fit.model.b);
  j["lambda"] = fit.lambda;
  j["diagnostics"] = {{"kkt", fit.diagnostics.kkt},
                      {"iterations", fit.diagnostics.iterations},
                      {"lambda_index", fit.diagnostics.lambda_index}};
  write_file(j, path);
}

ITRFit load_model(const std::string& path) {
  const json j = parse_file(path, "itr-model");
  ITRFit fit;
  try {
    fit.method = j.at("method").get<std::string>();
    fit.basis_degree = j.at("basis_degree").get<int>();
    fit.lambda = j.at("lambda").get<double>();
    const int num_arms = j.at("num_arms").get<int>();
    if (num_arms < 2) throw DataError(path + ": num_arms must be at least 2");
    fit.model.coding = build_coding(num_arms);
    fit.model.b = matrix_from(j.at("coefficients"), "coefficients");
    fit.standardizer.mean = vector_from(j.at("standardizer").at("mean"), "mean");
    fit.standardizer.scale = vector_from(j.at("standardizer").at("scale"), "scale");
    if (j.contains("diagnostics")) {
      const json& d = j.at("diagnostics");
      fit.diagnostics.kkt = d.value("kkt", 0.0);
      fit.diagnostics.iterations = d.value("iterations", 0);
      fit.diagnostics.lambda_index = d.value("lambda_index", -1);
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (fit.basis_degree != 1 && fit.basis_degree != 3)
    throw DataError(path + ": basis_degree must be 1 or 3");
  if (fit.standardizer.mean.size() != fit.standardizer.scale.size())
    throw DataError(path + ": standardizer mean/scale lengths differ");
  const int expanded = static_cast<int>(fit.standardizer.mean.size());
  if (fit.model.b.rows() != expanded + 1)
    throw DataError(path + ": coefficients have " + std::to_string(fit.model.b.rows()) +
                    " rows but the standardizer covers " + std::to_string(expanded) +
                    " columns");
  if (fit.model.b.cols() != fit.model.coding.num_arms - 1)
    throw DataError(path + ": coefficients have " + std::to_string(fit.model.b.cols()) +
                    " columns for " + std::to_string(fit.model.coding.num_arms) + " arms");
  return fit;
}

void save_scenario(const Scenario& s, const std::string& path) {
  json j;
  j["format"] = "scenario";
  j["version"] = 1;
  j["n"] = s.n;
  j["p"] = s.p;
  j["num_arms"] = s.num_arms;
  j["tf_misspec"] = s.tf_misspec;
  j["heteroscedastic"] = s.heteroscedastic;
  j["prop_misspec"] = s.prop_misspec;
  j["seed"] = s.seed;
  j["beta"] = to_json(s.beta);
  write_file(j, path);
}

Scenario load_scenario(const std::string& path) {
  const json j = parse_file(path, "scenario");
  Scenario s;
  try {
    s.n = j.at("n").get<int>();
    s.p = j.at("p").get<int>();
    s.num_arms = j.at("num_arms").get<int>();
    s.tf_misspec = j.at("tf_misspec").get<bool>();
    s.heteroscedastic = j.at("heteroscedastic").get<bool>();
    s.prop_misspec = j.at("prop_misspec").get<bool>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("beta"))
      s.beta = matrix_from(j.at("beta"), "beta");
    else
      s = make_scenario(s.n, s.p, s.num_arms, s.tf_misspec, s.heteroscedastic,
                        s.prop_misspec, s.seed);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (s.beta.rows() != s.num_arms || s.beta.cols() != s.p + 1)
    throw DataError(path + ": beta must be " + std::to_string(s.num_arms) + " x " +
                    std::to_string(s.p + 1));
  validate(s);
  return s;
}

}  // namespace elearn
