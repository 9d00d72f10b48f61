#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "daa/numerics.hpp"
#include "daa/panel.hpp"

namespace daa {

// ===========================================================================
// Full-covariance Gaussian hidden Markov model
// ===========================================================================

struct HmmModel {
  Eigen::VectorXd initial;                   // K
  Eigen::MatrixXd transition;                // K x K row-stochastic
  Eigen::MatrixXd means;                     // K x L
  std::vector<Eigen::MatrixXd> covariances;  // K of L x L, PD

  int n_states() const { return static_cast<int>(initial.size()); }
  int n_features() const { return static_cast<int>(means.cols()); }

  void validate() const {
    const int K = n_states();
    if (K < 1) throw ShapeError("model needs at least one state");
    if (transition.rows() != K || transition.cols() != K)
      throw ShapeError("transition must be K x K");
    if (means.rows() != K) throw ShapeError("means must have K rows");
    if (static_cast<int>(covariances.size()) != K)
      throw ShapeError("need one covariance per state");
    if (initial.minCoeff() < 0 || std::abs(initial.sum() - 1.0) > 1e-10)
      throw ParameterError("initial distribution is not stochastic");
    for (int i = 0; i < K; ++i) {
      if (transition.row(i).minCoeff() < 0 ||
          std::abs(transition.row(i).sum() - 1.0) > 1e-10)
        throw ParameterError("transition row " + std::to_string(i) + " is not stochastic");
      if (covariances[i].rows() != n_features() || covariances[i].cols() != n_features())
        throw ShapeError("covariance dimension mismatch in state " + std::to_string(i));
    }
  }
};

struct FitReport {
  double log_likelihood = 0.0;
  int n_iterations = 0;
  bool converged = false;
  int restart_index = 0;
  std::vector<double> trace;  // log-likelihood after each E-step
};

struct FitConfig {
  double tol = 1e-6;               // relative log-likelihood change
  int max_iter = 500;
  int n_restarts = 10;
  std::optional<double> cov_reg;   // default 1e-8 * trace(sample cov) / L
  std::uint64_t seed = 0;
  bool sort_states = true;         // descending mean of first feature
  bool parallel = true;
};

namespace detail {

inline void check_dims(const HmmModel& model, const ReturnPanel& panel) {
  if (model.n_features() != static_cast<int>(panel.cols()))
    throw ShapeError("model expects " + std::to_string(model.n_features()) +
                     " features, panel has " + std::to_string(panel.cols()));
}

// T x K matrix of log emission densities.
inline Eigen::MatrixXd log_emission_matrix(const HmmModel& model, const Eigen::MatrixXd& y) {
  const int K = model.n_states();
  const Eigen::Index T = y.rows();
  Eigen::MatrixXd logb(T, K);
  for (int i = 0; i < K; ++i) {
    MvNormal mvn(model.means.row(i).transpose(), model.covariances[i]);
    for (Eigen::Index t = 0; t < T; ++t) logb(t, i) = mvn.log_pdf(y.row(t).transpose());
  }
  return logb;
}

inline Eigen::MatrixXd safe_log(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double v) { return v > 0 ? std::log(v) : kNegInf; });
}

inline Eigen::VectorXd safe_log(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double x) { return x > 0 ? std::log(x) : kNegInf; });
}

// Log-space forward pass; returns log alpha (T x K).
inline Eigen::MatrixXd forward_log(const Eigen::VectorXd& log_pi, const Eigen::MatrixXd& log_a,
                                   const Eigen::MatrixXd& logb) {
  const Eigen::Index T = logb.rows();
  const int K = static_cast<int>(logb.cols());
  Eigen::MatrixXd la(T, K);
  la.row(0) = (log_pi + logb.row(0).transpose()).transpose();
  Eigen::VectorXd tmp(K);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int j = 0; j < K; ++j) {
      for (int i = 0; i < K; ++i) tmp[i] = la(t - 1, i) + log_a(i, j);
      la(t, j) = log_sum_exp(tmp) + logb(t, j);
    }
  }
  return la;
}

inline Eigen::MatrixXd backward_log(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& logb) {
  const Eigen::Index T = logb.rows();
  const int K = static_cast<int>(logb.cols());
  Eigen::MatrixXd lb(T, K);
  lb.row(T - 1).setZero();
  Eigen::VectorXd tmp(K);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) tmp[j] = log_a(i, j) + logb(t + 1, j) + lb(t + 1, j);
      lb(t, i) = log_sum_exp(tmp);
    }
  }
  return lb;
}

struct HmmEStep {
  Eigen::MatrixXd gamma;   // T x K posteriors
  Eigen::MatrixXd xi_sum;  // K x K, sum_t xi_t(i,j)
  double log_likelihood = 0.0;
};

inline HmmEStep e_step(const Eigen::VectorXd& log_pi, const Eigen::MatrixXd& log_a,
                       const Eigen::MatrixXd& logb) {
  const Eigen::Index T = logb.rows();
  const int K = static_cast<int>(logb.cols());
  Eigen::MatrixXd la = forward_log(log_pi, log_a, logb);
  Eigen::MatrixXd lb = backward_log(log_a, logb);
  double ll = log_sum_exp(la.row(T - 1).transpose());

  HmmEStep out;
  out.log_likelihood = ll;
  out.gamma = (la + lb).array() - ll;
  out.gamma = out.gamma.array().exp();
  for (Eigen::Index t = 0; t < T; ++t) {
    double s = out.gamma.row(t).sum();
    if (s > 0) out.gamma.row(t) /= s;
  }
  out.xi_sum = Eigen::MatrixXd::Zero(K, K);
  for (Eigen::Index t = 1; t < T; ++t)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        out.xi_sum(i, j) +=
            std::exp(la(t - 1, i) + log_a(i, j) + logb(t, j) + lb(t, j) - ll);
  return out;
}

}  // namespace detail

// Marginal log p(y | model) via the log-space forward recursion.
inline double log_likelihood(const HmmModel& model, const ReturnPanel& panel) {
  detail::check_dims(model, panel);
  Eigen::MatrixXd logb = detail::log_emission_matrix(model, panel.values());
  Eigen::MatrixXd la = detail::forward_log(detail::safe_log(model.initial),
                                           detail::safe_log(model.transition), logb);
  return log_sum_exp(la.row(la.rows() - 1).transpose());
}

// Most probable joint state path; ties resolved toward the lower state index.
inline std::vector<int> viterbi_decode(const HmmModel& model, const ReturnPanel& panel) {
  detail::check_dims(model, panel);
  const Eigen::MatrixXd logb = detail::log_emission_matrix(model, panel.values());
  const Eigen::VectorXd log_pi = detail::safe_log(model.initial);
  const Eigen::MatrixXd log_a = detail::safe_log(model.transition);
  const Eigen::Index T = logb.rows();
  const int K = model.n_states();

  Eigen::MatrixXd score(T, K);
  Eigen::MatrixXi back(T, K);
  score.row(0) = (log_pi + logb.row(0).transpose()).transpose();
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int j = 0; j < K; ++j) {
      int best_i = 0;
      double best = score(t - 1, 0) + log_a(0, j);
      for (int i = 1; i < K; ++i) {
        double cand = score(t - 1, i) + log_a(i, j);
        if (cand > best) {
          best = cand;
          best_i = i;
        }
      }
      score(t, j) = best + logb(t, j);
      back(t, j) = best_i;
    }
  }
  int last = 0;
  for (int i = 1; i < K; ++i)
    if (score(T - 1, i) > score(T - 1, last)) last = i;
  std::vector<int> path(T);
  path[T - 1] = last;
  for (Eigen::Index t = T - 1; t > 0; --t) path[t - 1] = back(t, path[t]);
  return path;
}

// Posterior state probabilities gamma_t(i) from the forward-backward pass.
inline Eigen::MatrixXd smoothed_state_probabilities(const HmmModel& model,
                                                    const ReturnPanel& panel) {
  detail::check_dims(model, panel);
  Eigen::MatrixXd logb = detail::log_emission_matrix(model, panel.values());
  auto es = detail::e_step(detail::safe_log(model.initial),
                           detail::safe_log(model.transition), logb);
  return es.gamma;
}

inline HmmModel permute_states(const HmmModel& model, const std::vector<int>& perm) {
  const int K = model.n_states();
  HmmModel out = model;
  for (int i = 0; i < K; ++i) {
    out.initial[i] = model.initial[perm[i]];
    out.means.row(i) = model.means.row(perm[i]);
    out.covariances[i] = model.covariances[perm[i]];
    for (int j = 0; j < K; ++j) out.transition(i, j) = model.transition(perm[i], perm[j]);
  }
  return out;
}

// Canonical state labels: descending mean of the first feature, so the label
// semantics survive monthly retrains.
inline HmmModel sort_states_by_first_mean(const HmmModel& model) {
  std::vector<int> perm(model.n_states());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return model.means(a, 0) > model.means(b, 0); });
  return permute_states(model, perm);
}

namespace detail {

inline double default_cov_reg(const Eigen::MatrixXd& y) {
  const Eigen::Index L = y.cols();
  Eigen::RowVectorXd mean = y.colwise().mean();
  double trace = (y.rowwise() - mean).squaredNorm() / std::max<double>(1.0, y.rows() - 1);
  return 1e-8 * trace / static_cast<double>(L);
}

// A column whose spread is at rounding-noise level cannot support a Gaussian
// emission; reject it instead of fitting a degenerate model.
inline void reject_constant_columns(const Eigen::MatrixXd& y) {
  Eigen::RowVectorXd mean = y.colwise().mean();
  for (Eigen::Index l = 0; l < y.cols(); ++l) {
    double sd = std::sqrt((y.col(l).array() - mean[l]).square().sum() /
                          std::max<double>(1.0, y.rows() - 1));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean[l])))
      throw ParameterError("column " + std::to_string(l) + " has zero variance");
  }
}

inline HmmModel random_init(const Eigen::MatrixXd& y, int K, double cov_reg,
                            std::mt19937_64& rng) {
  const Eigen::Index T = y.rows();
  const Eigen::Index L = y.cols();
  HmmModel m;
  m.initial.resize(K);
  m.transition.resize(K, K);
  m.means.resize(K, L);

  Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::MatrixXd centered = y.rowwise() - mean;
  Eigen::MatrixXd sample_cov =
      centered.transpose() * centered / std::max<double>(1.0, T - 1);
  Eigen::RowVectorXd sd = sample_cov.diagonal().cwiseSqrt().transpose();

  // Means from K distinct random rows plus small jitter.
  std::vector<Eigen::Index> rows(T);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int i = 0; i < K; ++i) {
    m.means.row(i) = y.row(rows[i % T]);
    for (Eigen::Index l = 0; l < L; ++l) m.means(i, l) += 0.05 * sd[l] * norm(rng);
  }
  Eigen::MatrixXd reg = cov_reg * Eigen::MatrixXd::Identity(L, L);
  m.covariances.assign(K, sample_cov + reg);

  // Uniform pi and A with Dirichlet jitter.
  std::gamma_distribution<double> gam(20.0, 1.0);
  for (int i = 0; i < K; ++i) m.initial[i] = gam(rng);
  m.initial /= m.initial.sum();
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) m.transition(i, j) = gam(rng);
    m.transition.row(i) /= m.transition.row(i).sum();
  }
  return m;
}

// One full EM run from the given starting point. Returns false if the
// likelihood went non-finite.
inline bool run_em(const Eigen::MatrixXd& y, double cov_reg, const FitConfig& cfg,
                   HmmModel& model, FitReport& report) {
  const Eigen::Index T = y.rows();
  const int K = model.n_states();
  const Eigen::Index L = y.cols();
  const Eigen::MatrixXd reg = cov_reg * Eigen::MatrixXd::Identity(L, L);

  double ll_prev = kNegInf;
  report.trace.clear();
  for (int it = 1; it <= cfg.max_iter; ++it) {
    Eigen::MatrixXd logb;
    HmmEStep es;
    try {
      logb = log_emission_matrix(model, y);
      es = e_step(safe_log(model.initial), safe_log(model.transition), logb);
    } catch (const NumericalError&) {
      return false;
    }
    if (!std::isfinite(es.log_likelihood)) return false;
    report.trace.push_back(es.log_likelihood);
    report.log_likelihood = es.log_likelihood;
    if (it > 1 &&
        std::abs(es.log_likelihood - ll_prev) <= cfg.tol * std::max(1.0, std::abs(ll_prev))) {
      report.converged = true;
      report.n_iterations = it - 1;
      return true;
    }
    ll_prev = es.log_likelihood;
    report.n_iterations = it;

    // M-step
    model.initial = es.gamma.row(0).transpose();
    model.initial /= model.initial.sum();
    for (int i = 0; i < K; ++i) {
      double row_sum = es.xi_sum.row(i).sum();
      if (row_sum > 0) model.transition.row(i) = es.xi_sum.row(i) / row_sum;
      double w = es.gamma.col(i).sum();
      if (w < 1e-12) continue;  // starved state: keep previous emission parameters
      Eigen::RowVectorXd mu = (es.gamma.col(i).transpose() * y) / w;
      Eigen::MatrixXd centered = y.rowwise() - mu;
      Eigen::MatrixXd cov =
          centered.transpose() * es.gamma.col(i).asDiagonal() * centered / w;
      model.means.row(i) = mu;
      model.covariances[i] = 0.5 * (cov + cov.transpose()) + reg;
    }
  }
  return true;
}

struct RestartResult {
  HmmModel model;
  FitReport report;
  bool ok = false;
};

}  // namespace detail

// Baum-Welch with multi-restart; returns the best model by final
// log-likelihood (ties toward the lower restart index).
inline std::pair<HmmModel, FitReport> fit_baum_welch(const ReturnPanel& panel, int K,
                                                     const FitConfig& cfg = {}) {
  if (K < 1) throw ParameterError("K must be >= 1");
  if (static_cast<int>(panel.rows()) <= K)
    throw InsufficientDataError("need more observations than states");
  if (cfg.n_restarts < 1) throw ParameterError("n_restarts must be >= 1");
  const Eigen::MatrixXd& y = panel.values();
  detail::reject_constant_columns(y);
  const double cov_reg = cfg.cov_reg ? *cfg.cov_reg : detail::default_cov_reg(y);

  const auto seeds = spawn_seeds(cfg.seed, cfg.n_restarts);
  std::vector<detail::RestartResult> results(cfg.n_restarts);
  auto run_one = [&](int r) {
    std::mt19937_64 rng(seeds[r]);
    detail::RestartResult& out = results[r];
    out.model = detail::random_init(y, K, cov_reg, rng);
    out.report.restart_index = r;
    out.ok = detail::run_em(y, cov_reg, cfg, out.model, out.report);
  };

  unsigned workers = cfg.parallel
                         ? std::min<unsigned>(std::thread::hardware_concurrency(),
                                              static_cast<unsigned>(cfg.n_restarts))
                         : 1;
  if (workers > 1) {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < cfg.n_restarts; r = next.fetch_add(1)) run_one(r);
      });
    for (auto& th : pool) th.join();
  } else {
    for (int r = 0; r < cfg.n_restarts; ++r) run_one(r);
  }

  int best = -1;
  for (int r = 0; r < cfg.n_restarts; ++r) {
    if (!results[r].ok) continue;
    if (best < 0 || results[r].report.log_likelihood > results[best].report.log_likelihood)
      best = r;
  }
  if (best < 0) throw NumericalError("all restarts diverged to non-finite likelihood");

  HmmModel model = std::move(results[best].model);
  FitReport report = std::move(results[best].report);
  if (cfg.sort_states) model = sort_states_by_first_mean(model);
  return {std::move(model), std::move(report)};
}

// Single EM run warm-started from an existing model (monthly retrains).
inline std::pair<HmmModel, FitReport> fit_baum_welch_from(const ReturnPanel& panel,
                                                          const HmmModel& start,
                                                          const FitConfig& cfg = {}) {
  detail::check_dims(start, panel);
  const Eigen::MatrixXd& y = panel.values();
  detail::reject_constant_columns(y);
  const double cov_reg = cfg.cov_reg ? *cfg.cov_reg : detail::default_cov_reg(y);

  HmmModel model = start;
  FitReport report;
  if (!detail::run_em(y, cov_reg, cfg, model, report))
    throw NumericalError("warm-started EM diverged to non-finite likelihood");
  if (cfg.sort_states) model = sort_states_by_first_mean(model);
  return {std::move(model), std::move(report)};
}

// BIC = -2 log p(y|model) + d log(T), d = (K-1) + K(K-1) + KL + K L(L+1)/2.
inline double bic(const HmmModel& model, const ReturnPanel& panel) {
  const double ll = log_likelihood(model, panel);
  const double K = model.n_states();
  const double L = model.n_features();
  const double d = (K - 1) + K * (K - 1) + K * L + K * L * (L + 1) / 2.0;
  return -2.0 * ll + d * std::log(static_cast<double>(panel.rows()));
}

struct StateSelectionRow {
  int n_states = 0;
  double bic = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
};

struct StateSelection {
  int best_k = 0;
  std::vector<StateSelectionRow> table;
};

// Fits every candidate K with the same restart budget; lowest BIC wins
// (ties toward the smaller model). The table is returned for audit, and the
// caller is free to override the choice.
inline StateSelection select_n_states(const ReturnPanel& panel, std::vector<int> candidates,
                                      const FitConfig& cfg = {}) {
  if (candidates.empty()) throw ParameterError("no candidate state counts");
  std::sort(candidates.begin(), candidates.end());
  StateSelection out;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int k : candidates) {
    auto [model, report] = fit_baum_welch(panel, k, cfg);
    StateSelectionRow row;
    row.n_states = k;
    row.bic = bic(model, panel);
    row.log_likelihood = report.log_likelihood;
    row.converged = report.converged;
    out.table.push_back(row);
    if (row.bic < best_bic) {
      best_bic = row.bic;
      out.best_k = k;
    }
  }
  return out;
}

}  // namespace daa
