#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "daa/numerics.hpp"

namespace daa {

// ===========================================================================
// Long-only portfolio constructors. All weights live on the simplex
// {w >= 0, sum w = 1}; MaxReturn additionally caps per-asset weight.
// ===========================================================================

enum class PortfolioMethod {
  MaxReturn,
  Dyn,
  Sharpe,
  RiskParity,
  MaxDiversification,
  MinVariance,
  EqualWeight,
};

inline const char* to_string(PortfolioMethod m) {
  switch (m) {
    case PortfolioMethod::MaxReturn: return "max_return";
    case PortfolioMethod::Dyn: return "dyn";
    case PortfolioMethod::Sharpe: return "sharpe";
    case PortfolioMethod::RiskParity: return "risk_parity";
    case PortfolioMethod::MaxDiversification: return "max_diversification";
    case PortfolioMethod::MinVariance: return "min_variance";
    case PortfolioMethod::EqualWeight: return "equal_weight";
  }
  return "?";
}

inline PortfolioMethod portfolio_method_from_string(const std::string& s) {
  for (auto m : {PortfolioMethod::MaxReturn, PortfolioMethod::Dyn, PortfolioMethod::Sharpe,
                 PortfolioMethod::RiskParity, PortfolioMethod::MaxDiversification,
                 PortfolioMethod::MinVariance, PortfolioMethod::EqualWeight})
    if (s == to_string(m)) return m;
  throw ParameterError("unknown portfolio method: " + s);
}

struct RegimeMoments {
  Eigen::VectorXd mean;        // expected daily returns
  Eigen::MatrixXd covariance;  // L x L symmetric PSD

  int size() const { return static_cast<int>(mean.size()); }

  // Symmetrized and ridge-regularized covariance used by the optimizers.
  Eigen::MatrixXd prepared_covariance() const {
    if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size())
      throw ShapeError("moment dimensions inconsistent");
    if (!covariance.isApprox(covariance.transpose(), 1e-12))
      throw ParameterError("covariance must be symmetric");
    Eigen::MatrixXd v = 0.5 * (covariance + covariance.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw ParameterError("covariance has a significantly negative eigenvalue");
    const double ridge = 1e-10 * v.trace() / v.rows();
    v.diagonal().array() += std::max(ridge, 1e-300);
    return v;
  }
};

struct PortfolioWeights {
  Eigen::VectorXd w;
  PortfolioMethod method = PortfolioMethod::EqualWeight;
  bool min_variance_fallback = false;  // Sharpe with no positive mean

  void validate(double cap = 1.0) const {
    if (w.minCoeff() < 0) throw ParameterError("weights must be non-negative");
    if (std::abs(w.sum() - 1.0) > 1e-8) throw ParameterError("weights must sum to 1");
    if (w.maxCoeff() > cap + 1e-8) throw ParameterError("weight cap violated");
  }
};

namespace detail {

// Snap dust to zero and renormalize; keeps turnover accounting clean.
inline Eigen::VectorXd tidy_weights(Eigen::VectorXd w) {
  w = w.cwiseMax(0.0);
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w[j] < 1e-10) w[j] = 0.0;
  double s = w.sum();
  if (s <= 0) throw NumericalError("degenerate weight vector");
  return w / s;
}

struct SimplexSolveOptions {
  int n_restarts = 10;
  int max_iter = 5000;
  double tol = 1e-6;  // scale-free projected-gradient residual
  std::uint64_t seed = 20240601;
};

// ||P(w + g/|g|_inf) - w||_inf : zero exactly at a KKT point, invariant to
// rescaling the objective.
inline double stationarity_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& grad) {
  double gmax = grad.cwiseAbs().maxCoeff();
  if (gmax <= 1e-300) return 0.0;
  Eigen::VectorXd probe = project_to_simplex(w + grad / gmax);
  return (probe - w).cwiseAbs().maxCoeff();
}

// Projected gradient ascent with backtracking from several starts.
inline Eigen::VectorXd maximize_on_simplex(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad, int L,
    const std::vector<Eigen::VectorXd>& deterministic_starts,
    const SimplexSolveOptions& opts = {}) {
  std::vector<Eigen::VectorXd> starts = deterministic_starts;
  starts.push_back(Eigen::VectorXd::Constant(L, 1.0 / L));
  std::mt19937_64 rng(opts.seed);
  std::gamma_distribution<double> gam(1.0, 1.0);
  for (int r = 0; r < opts.n_restarts; ++r) {
    Eigen::VectorXd v(L);
    for (int j = 0; j < L; ++j) v[j] = gam(rng) + 1e-6;
    starts.push_back(v / v.sum());
  }

  Eigen::VectorXd best;
  double best_val = -std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    Eigen::VectorXd w = project_to_simplex(start);
    double fw = f(w);
    if (!std::isfinite(fw)) continue;
    double step = 1.0;
    for (int it = 0; it < opts.max_iter; ++it) {
      Eigen::VectorXd g = grad(w);
      double gmax = g.cwiseAbs().maxCoeff();
      if (gmax <= 1e-300) break;
      if (stationarity_residual(w, g) <= opts.tol) break;

      // Backtracking on the normalized gradient direction.
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        Eigen::VectorXd cand = project_to_simplex(w + (step / gmax) * g);
        double fc = f(cand);
        if (std::isfinite(fc) && fc > fw + 1e-16) {
          w = std::move(cand);
          fw = fc;
          step *= 1.3;
          moved = true;
          break;
        }
        step *= 0.5;
        if (step < 1e-14) break;
      }
      if (!moved) break;
    }
    if (fw > best_val) {
      best_val = fw;
      best = w;
    }
  }
  if (best.size() == 0) throw NumericalError("simplex solver found no finite objective value");
  return best;
}

// Support-restricted closed form x = V_S^{-1} b_S, w = x / sum(x). Returns
// true when the polish produced a feasible improvement.
inline bool support_polish(const Eigen::MatrixXd& v, const Eigen::VectorXd& b,
                           const std::function<double(const Eigen::VectorXd&)>& f,
                           Eigen::VectorXd& w) {
  std::vector<int> support;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w[j] > 1e-9) support.push_back(static_cast<int>(j));
  if (support.empty()) return false;
  const int n = static_cast<int>(support.size());
  Eigen::MatrixXd vs(n, n);
  Eigen::VectorXd bs(n);
  for (int a = 0; a < n; ++a) {
    bs[a] = b[support[a]];
    for (int c = 0; c < n; ++c) vs(a, c) = v(support[a], support[c]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(vs);
  if (llt.info() != Eigen::Success) return false;
  Eigen::VectorXd x = llt.solve(bs);
  if (x.minCoeff() < 0 || x.sum() <= 0) return false;
  Eigen::VectorXd cand = Eigen::VectorXd::Zero(w.size());
  for (int a = 0; a < n; ++a) cand[support[a]] = x[a] / x.sum();
  if (f(cand) >= f(w)) {
    w = cand;
    return true;
  }
  return false;
}

}  // namespace detail

// Objective value of a weight vector under a method's natural criterion.
// Closed-form methods (Dyn, EqualWeight) are scored by closeness to their
// defining formula so that every method supports oracle comparisons.
inline double portfolio_objective(const RegimeMoments& m, PortfolioMethod method,
                                  const Eigen::VectorXd& w);

inline bool portfolio_objective_maximizes(PortfolioMethod method) {
  return method != PortfolioMethod::MinVariance;
}

// --------------------------------------------------------------------------
// Closed-form constructors
// --------------------------------------------------------------------------

inline PortfolioWeights equal_weight(int L) {
  if (L < 1) throw ParameterError("L must be >= 1");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(L, 1.0 / L);
  w /= w.sum();
  return {w, PortfolioMethod::EqualWeight, false};
}

// Greedy fill: cap to the best means (ties toward lower index) until the
// budget is spent. This is the exact LP solution.
inline PortfolioWeights max_return(const RegimeMoments& m, double cap = 0.8) {
  const int L = m.size();
  if (L < 1) throw ShapeError("empty moments");
  if (cap <= 0 || cap > 1.0 || cap * L < 1.0 - 1e-12)
    throw ParameterError("infeasible weight cap");
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return m.mean[a] > m.mean[b]; });
  Eigen::VectorXd w = Eigen::VectorXd::Zero(L);
  double remaining = 1.0;
  for (int j : order) {
    double take = std::min(cap, remaining);
    w[j] = take;
    remaining -= take;
    if (remaining <= 0) break;
  }
  return {w, PortfolioMethod::MaxReturn, false};
}

// Proportional to means when all are positive, otherwise equal weight.
inline PortfolioWeights dyn(const RegimeMoments& m) {
  const int L = m.size();
  if (L < 1) throw ShapeError("empty moments");
  Eigen::VectorXd w;
  if (m.mean.minCoeff() > 0)
    w = m.mean / m.mean.sum();
  else
    w = Eigen::VectorXd::Constant(L, 1.0 / L);
  return {detail::tidy_weights(w), PortfolioMethod::Dyn, false};
}

inline PortfolioWeights min_variance(const RegimeMoments& m);

// --------------------------------------------------------------------------
// Solver-backed constructors
// --------------------------------------------------------------------------

namespace detail {

inline PortfolioWeights solve_ratio(const RegimeMoments& m, const Eigen::VectorXd& numer,
                                    PortfolioMethod method) {
  const Eigen::MatrixXd v = m.prepared_covariance();
  const int L = m.size();
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance singular after regularization");

  auto f = [&](const Eigen::VectorXd& w) {
    double var = w.dot(v * w);
    if (var <= 0) return -std::numeric_limits<double>::infinity();
    return numer.dot(w) / std::sqrt(var);
  };
  auto grad = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd vw = v * w;
    double var = w.dot(vw);
    double sig = std::sqrt(var);
    double num = numer.dot(w);
    return Eigen::VectorXd(numer / sig - (num / (var * sig)) * vw);
  };

  std::vector<Eigen::VectorXd> starts;
  // inverse-volatility and best-vertex starts speed up typical cases
  Eigen::VectorXd inv_vol = v.diagonal().cwiseSqrt().cwiseInverse();
  starts.push_back(inv_vol / inv_vol.sum());
  int best_vertex = 0;
  numer.maxCoeff(&best_vertex);
  Eigen::VectorXd vert = Eigen::VectorXd::Zero(L);
  vert[best_vertex] = 1.0;
  starts.push_back(vert);

  SimplexSolveOptions opts;
  Eigen::VectorXd w = maximize_on_simplex(f, grad, L, starts, opts);
  support_polish(v, numer, f, w);
  return {tidy_weights(w), method, false};
}

}  // namespace detail

// Mean-variance tangency portfolio on the long-only simplex. When no mean is
// positive the minimum-variance point is returned and flagged.
inline PortfolioWeights max_sharpe(const RegimeMoments& m) {
  if (m.size() < 1) throw ShapeError("empty moments");
  if (m.mean.maxCoeff() <= 0) {
    PortfolioWeights w = min_variance(m);
    w.method = PortfolioMethod::Sharpe;
    w.min_variance_fallback = true;
    return w;
  }
  return detail::solve_ratio(m, m.mean, PortfolioMethod::Sharpe);
}

// Diversification ratio (w . sigma) / sqrt(w' V w).
inline PortfolioWeights max_diversification(const RegimeMoments& m) {
  if (m.size() < 1) throw ShapeError("empty moments");
  Eigen::VectorXd sigma = m.prepared_covariance().diagonal().cwiseSqrt();
  return detail::solve_ratio(m, sigma, PortfolioMethod::MaxDiversification);
}

inline PortfolioWeights min_variance(const RegimeMoments& m) {
  const int L = m.size();
  if (L < 1) throw ShapeError("empty moments");
  const Eigen::MatrixXd v = m.prepared_covariance();
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance singular after regularization");

  auto f = [&](const Eigen::VectorXd& w) { return -w.dot(v * w); };
  auto grad = [&](const Eigen::VectorXd& w) { return Eigen::VectorXd(-2.0 * v * w); };

  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd inv_var = v.diagonal().cwiseInverse();
  starts.push_back(inv_var / inv_var.sum());

  detail::SimplexSolveOptions opts;
  opts.tol = 1e-9;
  Eigen::VectorXd w = detail::maximize_on_simplex(f, grad, L, starts, opts);
  detail::support_polish(v, Eigen::VectorXd::Ones(L), f, w);
  return {detail::tidy_weights(w), PortfolioMethod::MinVariance, false};
}

// Equal risk contributions w_j (Vw)_j via cyclic coordinate descent on
// 0.5 x'Vx - sum log x, then normalization.
inline PortfolioWeights risk_parity(const RegimeMoments& m) {
  const int L = m.size();
  if (L < 1) throw ShapeError("empty moments");
  const Eigen::MatrixXd v = m.prepared_covariance();
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance singular after regularization");

  Eigen::VectorXd x = v.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::VectorXd vx = v * x;
  const int max_sweeps = 20000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int j = 0; j < L; ++j) {
      const double b = vx[j] - v(j, j) * x[j];
      const double x_new = (-b + std::sqrt(b * b + 4.0 * v(j, j))) / (2.0 * v(j, j));
      const double delta = x_new - x[j];
      if (delta != 0.0) {
        vx += delta * v.col(j);
        x[j] = x_new;
      }
    }
    // risk contributions of the normalized weights
    Eigen::VectorXd w = x / x.sum();
    Eigen::VectorXd rc = w.array() * (v * w).array();
    double total = rc.sum();
    if ((rc.maxCoeff() - rc.minCoeff()) <= 1e-10 * total) break;
  }
  Eigen::VectorXd w = x / x.sum();
  Eigen::VectorXd rc = w.array() * (v * w).array();
  if ((rc.maxCoeff() - rc.minCoeff()) > 1e-8 * w.dot(v * w))
    throw NumericalError("risk parity failed to equalize contributions");
  return {detail::tidy_weights(w), PortfolioMethod::RiskParity, false};
}

inline PortfolioWeights build_portfolio(const RegimeMoments& m, PortfolioMethod method,
                                        double cap = 0.8) {
  switch (method) {
    case PortfolioMethod::MaxReturn: return max_return(m, cap);
    case PortfolioMethod::Dyn: return dyn(m);
    case PortfolioMethod::Sharpe: return max_sharpe(m);
    case PortfolioMethod::RiskParity: return risk_parity(m);
    case PortfolioMethod::MaxDiversification: return max_diversification(m);
    case PortfolioMethod::MinVariance: return min_variance(m);
    case PortfolioMethod::EqualWeight: return equal_weight(m.size());
  }
  throw ParameterError("unknown portfolio method");
}

inline double portfolio_objective(const RegimeMoments& m, PortfolioMethod method,
                                  const Eigen::VectorXd& w) {
  switch (method) {
    case PortfolioMethod::MaxReturn:
      return m.mean.dot(w);
    case PortfolioMethod::Sharpe: {
      const Eigen::MatrixXd v = m.prepared_covariance();
      return m.mean.dot(w) / std::sqrt(w.dot(v * w));
    }
    case PortfolioMethod::MaxDiversification: {
      const Eigen::MatrixXd v = m.prepared_covariance();
      return v.diagonal().cwiseSqrt().dot(w) / std::sqrt(w.dot(v * w));
    }
    case PortfolioMethod::MinVariance: {
      const Eigen::MatrixXd v = m.prepared_covariance();
      return w.dot(v * w);
    }
    case PortfolioMethod::RiskParity: {
      const Eigen::MatrixXd v = m.prepared_covariance();
      Eigen::VectorXd rc = w.array() * (v * w).array();
      return -(rc.maxCoeff() - rc.minCoeff());
    }
    case PortfolioMethod::Dyn:
      return -(w - dyn(m).w).squaredNorm();
    case PortfolioMethod::EqualWeight:
      return -(w - equal_weight(static_cast<int>(w.size())).w).squaredNorm();
  }
  throw ParameterError("unknown portfolio method");
}

struct GridOracleResult {
  Eigen::VectorXd weights;
  double objective = 0.0;
  long points_evaluated = 0;
};

// Exhaustive evaluation on the simplex lattice with the given resolution.
// Intended as a test oracle; bounded to L <= 5.
inline GridOracleResult grid_oracle(const RegimeMoments& m, PortfolioMethod objective,
                                    double resolution, double cap = 0.8) {
  const int L = m.size();
  if (L < 1 || L > 5) throw ParameterError("grid oracle supports 1 <= L <= 5");
  if (resolution <= 0 || resolution > 1) throw ParameterError("resolution must be in (0,1]");
  const int steps = static_cast<int>(std::lround(1.0 / resolution));
  if (steps < 1) throw ParameterError("resolution too coarse");

  const bool maximize = portfolio_objective_maximizes(objective);
  GridOracleResult best;
  best.objective =
      maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();

  // Prepare shared quantities once; evaluating per lattice point must be cheap.
  const bool needs_cov = objective != PortfolioMethod::MaxReturn &&
                         objective != PortfolioMethod::Dyn &&
                         objective != PortfolioMethod::EqualWeight;
  Eigen::MatrixXd v;
  Eigen::VectorXd sigma, target;
  if (needs_cov) {
    v = m.prepared_covariance();
    sigma = v.diagonal().cwiseSqrt();
  }
  if (objective == PortfolioMethod::Dyn) target = dyn(m).w;
  if (objective == PortfolioMethod::EqualWeight) target = equal_weight(L).w;

  auto evaluate = [&](const Eigen::VectorXd& w) {
    switch (objective) {
      case PortfolioMethod::MaxReturn: return m.mean.dot(w);
      case PortfolioMethod::Sharpe: return m.mean.dot(w) / std::sqrt(w.dot(v * w));
      case PortfolioMethod::MaxDiversification:
        return sigma.dot(w) / std::sqrt(w.dot(v * w));
      case PortfolioMethod::MinVariance: return w.dot(v * w);
      case PortfolioMethod::RiskParity: {
        Eigen::VectorXd rc = w.array() * (v * w).array();
        return -(rc.maxCoeff() - rc.minCoeff());
      }
      case PortfolioMethod::Dyn:
      case PortfolioMethod::EqualWeight: return -(w - target).squaredNorm();
    }
    return 0.0;
  };

  Eigen::VectorXd w(L);
  std::vector<int> counts(L, 0);
  auto consider = [&]() {
    for (int j = 0; j < L; ++j) w[j] = static_cast<double>(counts[j]) / steps;
    if (objective == PortfolioMethod::MaxReturn && w.maxCoeff() > cap + 1e-12) return;
    double val = evaluate(w);
    ++best.points_evaluated;
    if ((maximize && val > best.objective) || (!maximize && val < best.objective)) {
      best.objective = val;
      best.weights = w;
    }
  };
  // enumerate compositions of `steps` into L parts
  std::function<void(int, int)> rec = [&](int idx, int remaining) {
    if (idx == L - 1) {
      counts[idx] = remaining;
      consider();
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[idx] = c;
      rec(idx + 1, remaining - c);
    }
  };
  rec(0, steps);
  if (best.weights.size() == 0) throw ParameterError("no feasible lattice point");
  return best;
}

}  // namespace daa
