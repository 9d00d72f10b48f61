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

#include "daa/ghmm.hpp"
#include "daa/numerics.hpp"
#include "daa/panel.hpp"

namespace daa {

// ===========================================================================
// MAP feature-saliency HMM: diagonal state-conditional Gaussians per feature,
// a state-independent Gaussian per feature, and a saliency rho_l giving the
// probability that feature l is state dependent. Fitting runs EM on the MAP
// objective (likelihood plus parameter priors) and estimates rho alongside
// the usual HMM parameters.
// ===========================================================================

struct FshmmModel {
  Eigen::VectorXd initial;          // I
  Eigen::MatrixXd transition;       // I x I
  Eigen::MatrixXd means;            // I x L, state-conditional mu_il
  Eigen::MatrixXd variances;        // I x L, state-conditional sigma^2_il
  Eigen::VectorXd saliency;         // L, rho_l in [0,1]
  Eigen::VectorXd irrelevant_mean;  // L, epsilon_l
  Eigen::VectorXd irrelevant_var;   // L, tau^2_l

  int n_states() const { return static_cast<int>(initial.size()); }
  int n_features() const { return static_cast<int>(means.cols()); }

  void validate() const {
    const int I = n_states();
    const int L = n_features();
    if (I < 1 || L < 1) throw ShapeError("model needs I >= 1 states and L >= 1 features");
    if (transition.rows() != I || transition.cols() != I)
      throw ShapeError("transition must be I x I");
    if (variances.rows() != I || variances.cols() != L)
      throw ShapeError("variances must be I x L");
    if (saliency.size() != L || irrelevant_mean.size() != L || irrelevant_var.size() != L)
      throw ShapeError("per-feature vectors must have length L");
    if (initial.minCoeff() < 0 || std::abs(initial.sum() - 1.0) > 1e-10)
      throw ParameterError("initial distribution is not stochastic");
    for (int i = 0; i < I; ++i)
      if (transition.row(i).minCoeff() < 0 ||
          std::abs(transition.row(i).sum() - 1.0) > 1e-10)
        throw ParameterError("transition row " + std::to_string(i) + " is not stochastic");
    if (variances.minCoeff() <= 0 || irrelevant_var.minCoeff() <= 0)
      throw ParameterError("variances must be positive");
    if (saliency.minCoeff() < 0 || saliency.maxCoeff() > 1)
      throw ParameterError("saliencies must lie in [0,1]");
  }
};

// Hyperparameters of the MAP priors. Dirichlet on pi and A rows, Normal on
// means, inverse-gamma on variances, and an exponential cost k_l on rho_l.
struct FshmmPriors {
  Eigen::VectorXd initial_dirichlet;     // beta_i >= 1
  Eigen::MatrixXd transition_dirichlet;  // alpha_ij >= 1
  Eigen::MatrixXd mean_loc;              // m_il
  Eigen::MatrixXd mean_scale;            // s_il > 0
  Eigen::MatrixXd var_shape;             // zeta_il > 0
  Eigen::MatrixXd var_scale;             // eta_il > 0
  Eigen::VectorXd irr_mean_loc;          // b_l
  Eigen::VectorXd irr_mean_scale;        // c_l > 0
  Eigen::VectorXd irr_var_shape;         // nu_l > 0
  Eigen::VectorXd irr_var_scale;         // psi_l > 0
  Eigen::VectorXd saliency_weight;       // k_l >= 0

  void validate(int I, int L) const {
    auto dim = [&](bool ok, const char* what) {
      if (!ok) throw ShapeError(std::string("prior dimension mismatch: ") + what);
    };
    dim(initial_dirichlet.size() == I, "initial_dirichlet");
    dim(transition_dirichlet.rows() == I && transition_dirichlet.cols() == I,
        "transition_dirichlet");
    dim(mean_loc.rows() == I && mean_loc.cols() == L, "mean_loc");
    dim(mean_scale.rows() == I && mean_scale.cols() == L, "mean_scale");
    dim(var_shape.rows() == I && var_shape.cols() == L, "var_shape");
    dim(var_scale.rows() == I && var_scale.cols() == L, "var_scale");
    dim(irr_mean_loc.size() == L, "irr_mean_loc");
    dim(irr_mean_scale.size() == L, "irr_mean_scale");
    dim(irr_var_shape.size() == L, "irr_var_shape");
    dim(irr_var_scale.size() == L, "irr_var_scale");
    dim(saliency_weight.size() == L, "saliency_weight");
    if (initial_dirichlet.minCoeff() < 1 || transition_dirichlet.minCoeff() < 1)
      throw ParameterError("dirichlet prior parameters must be >= 1");
    if (mean_scale.minCoeff() <= 0 || var_shape.minCoeff() <= 0 ||
        var_scale.minCoeff() <= 0 || irr_mean_scale.minCoeff() <= 0 ||
        irr_var_shape.minCoeff() <= 0 || irr_var_scale.minCoeff() <= 0)
      throw ParameterError("prior scales and shapes must be positive");
    if (saliency_weight.minCoeff() < 0)
      throw ParameterError("saliency weights k_l must be >= 0");
  }
};

struct SaliencyReport {
  Eigen::VectorXd saliency;
  std::vector<int> selected;
  double threshold = 0.9;
  Eigen::VectorXd k_used;
  std::vector<double> log_posterior_trace;
  double log_posterior = 0.0;
  int n_iterations = 0;
  bool converged = false;
  int restart_index = 0;
};

struct FshmmConfig {
  double delta = 1e-6;  // relative change of the MAP objective
  int max_iter = 500;
  int n_restarts = 5;
  std::uint64_t seed = 0;
  double selection_threshold = 0.9;
  bool sort_states = true;
  bool parallel = true;
};

// Indices with rho_l >= threshold, input order preserved.
inline std::vector<int> select_features(const Eigen::VectorXd& saliency, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ParameterError("selection threshold must lie in (0,1)");
  std::vector<int> out;
  for (int l = 0; l < saliency.size(); ++l)
    if (saliency[l] >= threshold) out.push_back(l);
  return out;
}

inline std::vector<int> select_features(const SaliencyReport& report, double threshold) {
  return select_features(report.saliency, threshold);
}

// k_l = k_scale * T for every feature; remaining hyperparameters are weak and
// centered on the sample statistics.
inline FshmmPriors default_priors(const ReturnPanel& panel, int I, double k_scale = 0.25) {
  if (panel.rows() < 8) throw InsufficientDataError("need T >= 8 for default priors");
  if (I < 1) throw ParameterError("I must be >= 1");
  const Eigen::MatrixXd& y = panel.values();
  const int L = static_cast<int>(panel.cols());
  const double T = static_cast<double>(panel.rows());

  Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::RowVectorXd var =
      ((y.rowwise() - mean).array().square().colwise().sum() / (T - 1)).matrix();
  Eigen::RowVectorXd sd = var.cwiseSqrt().cwiseMax(1e-12);
  var = var.cwiseMax(1e-24);

  FshmmPriors p;
  p.initial_dirichlet = Eigen::VectorXd::Ones(I);
  p.transition_dirichlet = Eigen::MatrixXd::Ones(I, I);
  p.mean_loc = mean.replicate(I, 1);
  p.mean_scale = sd.replicate(I, 1);
  p.var_shape = Eigen::MatrixXd::Ones(I, L);
  p.var_scale = var.replicate(I, 1);
  p.irr_mean_loc = mean.transpose();
  p.irr_mean_scale = sd.transpose();
  p.irr_var_shape = Eigen::VectorXd::Ones(L);
  p.irr_var_scale = var.transpose();
  p.saliency_weight = Eigen::VectorXd::Constant(L, k_scale * T);
  return p;
}

namespace detail {

inline void check_dims(const FshmmModel& model, const ReturnPanel& panel) {
  if (model.n_features() != static_cast<int>(panel.cols()))
    throw ShapeError("model expects " + std::to_string(model.n_features()) +
                     " features, panel has " + std::to_string(panel.cols()));
}

// E-step quantities. log_e / log_g are T x (I*L) with column index i*L + l:
//   e_ilt = rho_l r(y_lt | mu_il, sigma^2_il)
//   h_ilt = (1 - rho_l) q(y_lt | eps_l, tau^2_l)
//   g_ilt = e_ilt + h_ilt          (log_g = logaddexp(log_e, log_h))
//   u_ilt = gamma_t(i) e_ilt / g_ilt,  v_ilt = gamma_t(i) - u_ilt
struct FshmmEStep {
  Eigen::MatrixXd gamma;    // T x I
  Eigen::MatrixXd xi_sum;   // I x I
  Eigen::MatrixXd log_e;    // T x I*L
  Eigen::MatrixXd log_g;    // T x I*L
  double log_likelihood = 0.0;

  Eigen::VectorXd u_column(int i, int l, int L) const {
    const int c = i * L + l;
    return gamma.col(i).array() * (log_e.col(c) - log_g.col(c)).array().exp();
  }
};

// Per-feature mixture log densities and the resulting emission matrix.
inline void fshmm_log_mixture(const FshmmModel& model, const Eigen::MatrixXd& y,
                              Eigen::MatrixXd& log_e, Eigen::MatrixXd& log_g,
                              Eigen::MatrixXd& logb) {
  const int I = model.n_states();
  const int L = model.n_features();
  const Eigen::Index T = y.rows();
  log_e.resize(T, I * L);
  log_g.resize(T, I * L);
  logb.resize(T, I);

  Eigen::MatrixXd log_q(T, L);
  for (int l = 0; l < L; ++l) {
    const double tau2 = model.irrelevant_var[l];
    log_q.col(l) = -0.5 * (kLog2Pi + std::log(tau2) +
                           (y.col(l).array() - model.irrelevant_mean[l]).square() / tau2);
  }
  for (int i = 0; i < I; ++i) {
    for (int l = 0; l < L; ++l) {
      const int c = i * L + l;
      const double s2 = model.variances(i, l);
      const double rho = model.saliency[l];
      const double log_rho = rho > 0 ? std::log(rho) : kNegInf;
      const double log_1mrho = rho < 1 ? std::log1p(-rho) : kNegInf;
      Eigen::ArrayXd log_r =
          -0.5 * (kLog2Pi + std::log(s2) +
                  (y.col(l).array() - model.means(i, l)).square() / s2);
      for (Eigen::Index t = 0; t < T; ++t) {
        const double le = log_rho + log_r[t];
        const double lh = log_1mrho + log_q(t, l);
        log_e(t, c) = le;
        log_g(t, c) = log_add(le, lh);
      }
    }
    logb.col(i) = log_g.middleCols(i * L, L).rowwise().sum();
  }
}

inline FshmmEStep fshmm_e_step(const FshmmModel& model, const Eigen::MatrixXd& y) {
  FshmmEStep out;
  Eigen::MatrixXd logb;
  fshmm_log_mixture(model, y, out.log_e, out.log_g, logb);
  auto es = e_step(safe_log(model.initial), safe_log(model.transition), logb);
  out.gamma = std::move(es.gamma);
  out.xi_sum = std::move(es.xi_sum);
  out.log_likelihood = es.log_likelihood;
  return out;
}

// Parameter-dependent part of log G(Lambda). Normalizing constants are
// dropped; only differences across iterations matter.
inline double fshmm_log_prior(const FshmmModel& model, const FshmmPriors& priors) {
  const int I = model.n_states();
  const int L = model.n_features();
  double lp = 0.0;
  for (int i = 0; i < I; ++i) {
    if (priors.initial_dirichlet[i] > 1.0)
      lp += (priors.initial_dirichlet[i] - 1.0) * std::log(model.initial[i]);
    for (int j = 0; j < I; ++j)
      if (priors.transition_dirichlet(i, j) > 1.0)
        lp += (priors.transition_dirichlet(i, j) - 1.0) * std::log(model.transition(i, j));
  }
  for (int i = 0; i < I; ++i)
    for (int l = 0; l < L; ++l) {
      const double d = model.means(i, l) - priors.mean_loc(i, l);
      const double s2 = priors.mean_scale(i, l) * priors.mean_scale(i, l);
      lp += -0.5 * d * d / s2;
      lp += -(priors.var_shape(i, l) + 1.0) * std::log(model.variances(i, l)) -
            priors.var_scale(i, l) / model.variances(i, l);
    }
  for (int l = 0; l < L; ++l) {
    const double d = model.irrelevant_mean[l] - priors.irr_mean_loc[l];
    const double c2 = priors.irr_mean_scale[l] * priors.irr_mean_scale[l];
    lp += -0.5 * d * d / c2;
    lp += -(priors.irr_var_shape[l] + 1.0) * std::log(model.irrelevant_var[l]) -
          priors.irr_var_scale[l] / model.irrelevant_var[l];
    lp += std::log1p(-model.saliency[l]) - priors.saliency_weight[l] * model.saliency[l];
  }
  return lp;
}

// Closed-form saliency update: smaller root of
//   k rho^2 - T_hat rho + sum_u = 0,  T_hat = T + 1 + k,
// the k -> 0 limit being sum_u / (T + 1).
inline double saliency_update(double sum_u, double T, double k) {
  double rho;
  if (k < 1e-12) {
    rho = sum_u / (T + 1.0);
  } else {
    const double t_hat = T + 1.0 + k;
    const double disc = std::max(0.0, t_hat * t_hat - 4.0 * k * sum_u);
    rho = (t_hat - std::sqrt(disc)) / (2.0 * k);
  }
  return std::clamp(rho, 1e-6, 1.0 - 1e-6);
}

// MAP M-step; coordinate updates are exact conditional maximizers so the MAP
// objective cannot decrease.
inline void fshmm_m_step(FshmmModel& model, const FshmmPriors& priors,
                         const Eigen::MatrixXd& y, const FshmmEStep& es) {
  const int I = model.n_states();
  const int L = model.n_features();
  const double T = static_cast<double>(y.rows());

  Eigen::VectorXd pi_num =
      es.gamma.row(0).transpose() + priors.initial_dirichlet - Eigen::VectorXd::Ones(I);
  pi_num = pi_num.cwiseMax(0.0);
  model.initial = pi_num / pi_num.sum();

  for (int i = 0; i < I; ++i) {
    Eigen::VectorXd row = es.xi_sum.row(i).transpose() +
                          priors.transition_dirichlet.row(i).transpose() -
                          Eigen::VectorXd::Ones(I);
    row = row.cwiseMax(0.0);
    double s = row.sum();
    if (s > 0) model.transition.row(i) = row.transpose() / s;
  }

  Eigen::MatrixXd y2 = y.array().square();
  Eigen::VectorXd sum_u_total = Eigen::VectorXd::Zero(L);
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd v_vec = Eigen::VectorXd::Ones(y.rows());
    for (int i = 0; i < I; ++i) {
      Eigen::VectorXd u = es.u_column(i, l, L);
      const double su = u.sum();
      const double suy = u.dot(y.col(l));
      const double suy2 = u.dot(y2.col(l));
      sum_u_total[l] += su;
      v_vec -= u;

      const double s2 = priors.mean_scale(i, l) * priors.mean_scale(i, l);
      const double sig2_old = model.variances(i, l);
      const double mu = (s2 * suy + sig2_old * priors.mean_loc(i, l)) / (s2 * su + sig2_old);
      const double sse = std::max(0.0, suy2 - 2.0 * mu * suy + mu * mu * su);
      const double sig2 = (sse + 2.0 * priors.var_scale(i, l)) /
                          (su + 2.0 * (priors.var_shape(i, l) + 1.0));
      model.means(i, l) = mu;
      model.variances(i, l) = sig2;
    }

    const double sv = v_vec.sum();
    const double svy = v_vec.dot(y.col(l));
    const double svy2 = v_vec.dot(y2.col(l));
    const double c2 = priors.irr_mean_scale[l] * priors.irr_mean_scale[l];
    const double tau2_old = model.irrelevant_var[l];
    const double eps = (c2 * svy + tau2_old * priors.irr_mean_loc[l]) / (c2 * sv + tau2_old);
    const double sse = std::max(0.0, svy2 - 2.0 * eps * svy + eps * eps * sv);
    const double tau2 =
        (sse + 2.0 * priors.irr_var_scale[l]) / (sv + 2.0 * (priors.irr_var_shape[l] + 1.0));
    model.irrelevant_mean[l] = eps;
    model.irrelevant_var[l] = tau2;
    model.saliency[l] = saliency_update(sum_u_total[l], T, priors.saliency_weight[l]);
  }
}

inline FshmmModel fshmm_random_init(const Eigen::MatrixXd& y, int I, std::mt19937_64& rng) {
  const Eigen::Index T = y.rows();
  const int L = static_cast<int>(y.cols());
  Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::RowVectorXd var =
      ((y.rowwise() - mean).array().square().colwise().sum() /
       std::max<double>(1.0, T - 1))
          .matrix();
  var = var.cwiseMax(1e-24);
  Eigen::RowVectorXd sd = var.cwiseSqrt();

  FshmmModel m;
  m.means.resize(I, L);
  std::vector<Eigen::Index> rows(T);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int i = 0; i < I; ++i) {
    m.means.row(i) = y.row(rows[i % T]);
    for (int l = 0; l < L; ++l) m.means(i, l) += 0.05 * sd[l] * norm(rng);
  }
  m.variances = var.replicate(I, 1);
  m.irrelevant_mean = mean.transpose();
  m.irrelevant_var = var.transpose();
  m.saliency = Eigen::VectorXd::Constant(L, 0.5);

  std::gamma_distribution<double> gam(20.0, 1.0);
  m.initial.resize(I);
  for (int i = 0; i < I; ++i) m.initial[i] = gam(rng);
  m.initial /= m.initial.sum();
  m.transition.resize(I, I);
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < I; ++j) m.transition(i, j) = gam(rng);
    m.transition.row(i) /= m.transition.row(i).sum();
  }
  return m;
}

struct FshmmRunReport {
  double log_posterior = kNegInf;
  int n_iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

inline bool fshmm_run_em(const Eigen::MatrixXd& y, const FshmmPriors& priors,
                         const FshmmConfig& cfg, FshmmModel& model,
                         FshmmRunReport& report) {
  double lp_prev = kNegInf;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    FshmmEStep es = fshmm_e_step(model, y);
    if (!std::isfinite(es.log_likelihood)) return false;
    const double lp = es.log_likelihood + fshmm_log_prior(model, priors);
    if (!std::isfinite(lp)) return false;
    report.trace.push_back(lp);
    report.log_posterior = lp;
    if (it > 1 && std::abs(lp - lp_prev) <= cfg.delta * std::max(1.0, std::abs(lp_prev))) {
      report.converged = true;
      report.n_iterations = it - 1;
      return true;
    }
    lp_prev = lp;
    report.n_iterations = it;
    fshmm_m_step(model, priors, y, es);
  }
  return true;
}

inline FshmmModel fshmm_permute_states(const FshmmModel& model, const std::vector<int>& perm) {
  FshmmModel out = model;
  const int I = model.n_states();
  for (int i = 0; i < I; ++i) {
    out.initial[i] = model.initial[perm[i]];
    out.means.row(i) = model.means.row(perm[i]);
    out.variances.row(i) = model.variances.row(perm[i]);
    for (int j = 0; j < I; ++j) out.transition(i, j) = model.transition(perm[i], perm[j]);
  }
  return out;
}

}  // namespace detail

// Marginal log-likelihood under the saliency mixture emissions.
inline double log_likelihood(const FshmmModel& model, const ReturnPanel& panel) {
  detail::check_dims(model, panel);
  Eigen::MatrixXd log_e, log_g, logb;
  detail::fshmm_log_mixture(model, panel.values(), log_e, log_g, logb);
  Eigen::MatrixXd la = detail::forward_log(detail::safe_log(model.initial),
                                           detail::safe_log(model.transition), logb);
  return log_sum_exp(la.row(la.rows() - 1).transpose());
}

// Algorithm: initialize, iterate E/M on the MAP objective until the relative
// change drops below delta or max_iter is hit; best restart wins.
inline std::pair<FshmmModel, SaliencyReport> fit_fshmm_map(const ReturnPanel& panel, int I,
                                                           const FshmmPriors& priors,
                                                           const FshmmConfig& cfg = {}) {
  if (I < 1) throw ParameterError("I must be >= 1");
  if (static_cast<int>(panel.rows()) <= I)
    throw InsufficientDataError("need more observations than states");
  if (cfg.n_restarts < 1) throw ParameterError("n_restarts must be >= 1");
  priors.validate(I, static_cast<int>(panel.cols()));
  const Eigen::MatrixXd& y = panel.values();
  detail::reject_constant_columns(y);

  struct Restart {
    FshmmModel model;
    detail::FshmmRunReport report;
    bool ok = false;
  };
  const auto seeds = spawn_seeds(cfg.seed, cfg.n_restarts);
  std::vector<Restart> results(cfg.n_restarts);
  auto run_one = [&](int r) {
    std::mt19937_64 rng(seeds[r]);
    Restart& out = results[r];
    out.model = detail::fshmm_random_init(y, I, rng);
    out.ok = detail::fshmm_run_em(y, priors, cfg, out.model, out.report);
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
    if (best < 0 || results[r].report.log_posterior > results[best].report.log_posterior)
      best = r;
  }
  if (best < 0) throw NumericalError("all FSHMM restarts diverged to a non-finite posterior");

  FshmmModel model = std::move(results[best].model);
  if (cfg.sort_states) {
    std::vector<int> perm(I);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return model.means(a, 0) > model.means(b, 0); });
    model = detail::fshmm_permute_states(model, perm);
  }

  SaliencyReport report;
  report.saliency = model.saliency;
  report.threshold = cfg.selection_threshold;
  report.selected = select_features(model.saliency, cfg.selection_threshold);
  report.k_used = priors.saliency_weight;
  report.log_posterior_trace = std::move(results[best].report.trace);
  report.log_posterior = results[best].report.log_posterior;
  report.n_iterations = results[best].report.n_iterations;
  report.converged = results[best].report.converged;
  report.restart_index = best;
  return {std::move(model), std::move(report)};
}

}  // namespace daa
