#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "daa/backtest.hpp"
#include "daa/fshmm.hpp"
#include "daa/ghmm.hpp"
#include "daa/metrics.hpp"
#include "daa/panel.hpp"
#include "daa/portfolio.hpp"
#include "daa/synthetic.hpp"

namespace daa {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("expected a non-empty matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      throw FormatError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

// FNV-1a over a string; used for config/model fingerprints in run manifests.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// --------------------------------------------------------------------------
// Models
// --------------------------------------------------------------------------

inline void to_json(json& j, const FitReport& r) {
  j = json{{"log_likelihood", r.log_likelihood},
           {"n_iterations", r.n_iterations},
           {"converged", r.converged},
           {"restart_index", r.restart_index}};
}

inline void from_json(const json& j, FitReport& r) {
  j.at("log_likelihood").get_to(r.log_likelihood);
  j.at("n_iterations").get_to(r.n_iterations);
  j.at("converged").get_to(r.converged);
  j.at("restart_index").get_to(r.restart_index);
}

inline void to_json(json& j, const HmmModel& m) {
  json covs = json::array();
  for (const auto& c : m.covariances) covs.push_back(matrix_to_json(c));
  j = json{{"type", "hmm"},
           {"n_states", m.n_states()},
           {"n_features", m.n_features()},
           {"initial", vector_to_json(m.initial)},
           {"transition", matrix_to_json(m.transition)},
           {"means", matrix_to_json(m.means)},
           {"covariances", std::move(covs)}};
}

inline void from_json(const json& j, HmmModel& m) {
  m.initial = vector_from_json(j.at("initial"));
  m.transition = matrix_from_json(j.at("transition"));
  m.means = matrix_from_json(j.at("means"));
  m.covariances.clear();
  for (const auto& c : j.at("covariances")) m.covariances.push_back(matrix_from_json(c));
  m.validate();
}

inline void to_json(json& j, const FshmmPriors& p) {
  j = json{{"initial_dirichlet", vector_to_json(p.initial_dirichlet)},
           {"transition_dirichlet", matrix_to_json(p.transition_dirichlet)},
           {"mean_loc", matrix_to_json(p.mean_loc)},
           {"mean_scale", matrix_to_json(p.mean_scale)},
           {"var_shape", matrix_to_json(p.var_shape)},
           {"var_scale", matrix_to_json(p.var_scale)},
           {"irr_mean_loc", vector_to_json(p.irr_mean_loc)},
           {"irr_mean_scale", vector_to_json(p.irr_mean_scale)},
           {"irr_var_shape", vector_to_json(p.irr_var_shape)},
           {"irr_var_scale", vector_to_json(p.irr_var_scale)},
           {"saliency_weight", vector_to_json(p.saliency_weight)}};
}

inline void from_json(const json& j, FshmmPriors& p) {
  p.initial_dirichlet = vector_from_json(j.at("initial_dirichlet"));
  p.transition_dirichlet = matrix_from_json(j.at("transition_dirichlet"));
  p.mean_loc = matrix_from_json(j.at("mean_loc"));
  p.mean_scale = matrix_from_json(j.at("mean_scale"));
  p.var_shape = matrix_from_json(j.at("var_shape"));
  p.var_scale = matrix_from_json(j.at("var_scale"));
  p.irr_mean_loc = vector_from_json(j.at("irr_mean_loc"));
  p.irr_mean_scale = vector_from_json(j.at("irr_mean_scale"));
  p.irr_var_shape = vector_from_json(j.at("irr_var_shape"));
  p.irr_var_scale = vector_from_json(j.at("irr_var_scale"));
  p.saliency_weight = vector_from_json(j.at("saliency_weight"));
}

inline void to_json(json& j, const FshmmModel& m) {
  j = json{{"type", "fshmm"},
           {"n_states", m.n_states()},
           {"n_features", m.n_features()},
           {"initial", vector_to_json(m.initial)},
           {"transition", matrix_to_json(m.transition)},
           {"means", matrix_to_json(m.means)},
           {"variances", matrix_to_json(m.variances)},
           {"saliency", vector_to_json(m.saliency)},
           {"irrelevant_mean", vector_to_json(m.irrelevant_mean)},
           {"irrelevant_var", vector_to_json(m.irrelevant_var)}};
}

inline void from_json(const json& j, FshmmModel& m) {
  m.initial = vector_from_json(j.at("initial"));
  m.transition = matrix_from_json(j.at("transition"));
  m.means = matrix_from_json(j.at("means"));
  m.variances = matrix_from_json(j.at("variances"));
  m.saliency = vector_from_json(j.at("saliency"));
  m.irrelevant_mean = vector_from_json(j.at("irrelevant_mean"));
  m.irrelevant_var = vector_from_json(j.at("irrelevant_var"));
  m.validate();
}

inline void to_json(json& j, const SaliencyReport& r) {
  j = json{{"saliency", vector_to_json(r.saliency)},
           {"selected", r.selected},
           {"threshold", r.threshold},
           {"k_used", vector_to_json(r.k_used)},
           {"log_posterior_trace", r.log_posterior_trace},
           {"log_posterior", r.log_posterior},
           {"n_iterations", r.n_iterations},
           {"converged", r.converged},
           {"restart_index", r.restart_index}};
}

inline void from_json(const json& j, SaliencyReport& r) {
  r.saliency = vector_from_json(j.at("saliency"));
  j.at("selected").get_to(r.selected);
  j.at("threshold").get_to(r.threshold);
  r.k_used = vector_from_json(j.at("k_used"));
  j.at("log_posterior_trace").get_to(r.log_posterior_trace);
  j.at("log_posterior").get_to(r.log_posterior);
  j.at("n_iterations").get_to(r.n_iterations);
  j.at("converged").get_to(r.converged);
  j.at("restart_index").get_to(r.restart_index);
}

// --------------------------------------------------------------------------
// Reports, weights, synthetic specs
// --------------------------------------------------------------------------

inline void to_json(json& j, const PerformanceReport& r) {
  j = json{{"ann_return", r.ann_return},
           {"ann_vol", r.ann_vol},
           {"ir", r.ir},
           {"skewness", r.skewness},
           {"excess_kurtosis", r.excess_kurtosis},
           {"downside_risk", r.downside_risk},
           {"sortino", r.sortino},
           {"max_drawdown", r.max_drawdown},
           {"drawdown_days", r.drawdown_days}};
}

inline void from_json(const json& j, PerformanceReport& r) {
  j.at("ann_return").get_to(r.ann_return);
  j.at("ann_vol").get_to(r.ann_vol);
  j.at("ir").get_to(r.ir);
  j.at("skewness").get_to(r.skewness);
  j.at("excess_kurtosis").get_to(r.excess_kurtosis);
  j.at("downside_risk").get_to(r.downside_risk);
  j.at("sortino").get_to(r.sortino);
  j.at("max_drawdown").get_to(r.max_drawdown);
  j.at("drawdown_days").get_to(r.drawdown_days);
}

inline const char* report_csv_header() {
  return "label,ann_return,ann_vol,ir,skewness,excess_kurtosis,downside_risk,sortino,"
         "max_drawdown,drawdown_days";
}

inline std::string report_csv_row(const std::string& label, const PerformanceReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%ld",
                label.c_str(), r.ann_return, r.ann_vol, r.ir, r.skewness, r.excess_kurtosis,
                r.downside_risk, r.sortino, r.max_drawdown, r.drawdown_days);
  return std::string(buf);
}

// Weights keyed by asset identifier, with the moment snapshot used.
inline json weights_to_json(const PortfolioWeights& w, const std::vector<std::string>& assets,
                            const RegimeMoments& moments) {
  json by_asset = json::object();
  for (Eigen::Index i = 0; i < w.w.size(); ++i) by_asset[assets[i]] = w.w[i];
  return json{{"method", to_string(w.method)},
              {"weights", std::move(by_asset)},
              {"min_variance_fallback", w.min_variance_fallback},
              {"moments", {{"mean", vector_to_json(moments.mean)},
                           {"covariance", matrix_to_json(moments.covariance)}}}};
}

inline void to_json(json& j, const SyntheticSpec& s) {
  json covs = json::array();
  for (const auto& c : s.covariances) covs.push_back(matrix_to_json(c));
  j = json{{"n_states", s.n_states},
           {"transition", matrix_to_json(s.transition)},
           {"means", matrix_to_json(s.means)},
           {"covariances", std::move(covs)},
           {"n_noise", s.n_noise},
           {"noise_mean", s.noise_mean},
           {"noise_var", s.noise_var},
           {"length", s.length},
           {"seed", s.seed},
           {"start_date", s.start_date.to_string()}};
}

inline void from_json(const json& j, SyntheticSpec& s) {
  j.at("n_states").get_to(s.n_states);
  s.transition = matrix_from_json(j.at("transition"));
  s.means = matrix_from_json(j.at("means"));
  s.covariances.clear();
  for (const auto& c : j.at("covariances")) s.covariances.push_back(matrix_from_json(c));
  s.n_noise = j.value("n_noise", 0);
  s.noise_mean = j.value("noise_mean", 0.0);
  s.noise_var = j.value("noise_var", 1.0);
  j.at("length").get_to(s.length);
  s.seed = j.value("seed", 0ull);
  if (j.contains("start_date")) s.start_date = Date::parse(j.at("start_date").get<std::string>());
}

inline void to_json(json& j, const RebalanceEvent& e) {
  j = json{{"date", e.date.to_string()}, {"from_state", e.from_state},
           {"to_state", e.to_state},    {"turnover", e.turnover},
           {"cost", e.cost},            {"reason", e.reason}};
}

inline void to_json(json& j, const WindowCalibrationRow& r) {
  j = json{{"d", r.d},
           {"net_ir", r.net_ir},
           {"total_cost", r.total_cost},
           {"n_rebalances", r.n_rebalances}};
}

inline void to_json(json& j, const StateSelectionRow& r) {
  j = json{{"n_states", r.n_states},
           {"bic", r.bic},
           {"log_likelihood", r.log_likelihood},
           {"converged", r.converged}};
}

// --------------------------------------------------------------------------
// File helpers
// --------------------------------------------------------------------------

inline void write_json(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace daa
