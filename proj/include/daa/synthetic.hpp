#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "daa/numerics.hpp"
#include "daa/panel.hpp"

namespace daa {

// Regime-switching generator: a K-state Markov chain drives L_rel correlated
// Gaussian columns; n_noise extra columns are i.i.d. state-independent noise.
struct SyntheticSpec {
  int n_states = 2;
  Eigen::MatrixXd transition;                // K x K row-stochastic
  Eigen::MatrixXd means;                     // K x L_rel
  std::vector<Eigen::MatrixXd> covariances;  // K of L_rel x L_rel
  int n_noise = 0;
  double noise_mean = 0.0;
  double noise_var = 1.0;
  int length = 0;
  std::uint64_t seed = 0;
  Date start_date = Date(2000, 1, 3);  // synthetic dates step over weekdays

  int n_relevant() const { return static_cast<int>(means.cols()); }

  void validate() const {
    if (n_states < 1) throw ParameterError("n_states must be >= 1");
    if (length < 1) throw ParameterError("length must be >= 1");
    if (transition.rows() != n_states || transition.cols() != n_states)
      throw ShapeError("transition must be K x K");
    for (int i = 0; i < n_states; ++i) {
      if (transition.row(i).minCoeff() < 0)
        throw ParameterError("transition probabilities must be non-negative");
      if (std::abs(transition.row(i).sum() - 1.0) > 1e-12)
        throw ParameterError("transition row " + std::to_string(i) + " does not sum to 1");
    }
    if (means.rows() != n_states || means.cols() < 1)
      throw ShapeError("means must be K x L_rel with L_rel >= 1");
    if (static_cast<int>(covariances.size()) != n_states)
      throw ShapeError("need one covariance per state");
    for (const auto& c : covariances)
      if (c.rows() != means.cols() || c.cols() != means.cols())
        throw ShapeError("covariance dimension mismatch");
    if (n_noise < 0) throw ParameterError("n_noise must be >= 0");
    if (n_noise > 0 && noise_var <= 0) throw ParameterError("noise_var must be positive");
  }
};

struct SyntheticSample {
  ReturnPanel panel;
  std::vector<int> states;
};

// Deterministic given spec.seed. The chain starts in state 0; per step the
// draw order is fixed (state, relevant vector, noise columns).
inline SyntheticSample generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int K = spec.n_states;
  const int Lr = spec.n_relevant();
  const int T = spec.length;
  const int L = Lr + spec.n_noise;

  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(K);
  for (int i = 0; i < K; ++i) factors.push_back(psd_sampling_factor(spec.covariances[i]));

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);

  auto step_state = [&](int from) {
    double u = unif(rng);
    double cum = 0.0;
    for (int j = 0; j < K; ++j) {
      cum += spec.transition(from, j);
      if (u < cum) return j;
    }
    return K - 1;
  };

  std::vector<int> states(T);
  Eigen::MatrixXd values(T, L);
  Eigen::VectorXd z(Lr);
  const double noise_sd = std::sqrt(spec.noise_var);

  int state = 0;
  std::vector<Date> dates(T);
  Date d = spec.start_date;
  while (d.weekday() >= 5) d = d.next_day();
  for (int t = 0; t < T; ++t) {
    if (t > 0) state = step_state(states[t - 1]);
    states[t] = state;
    for (int l = 0; l < Lr; ++l) z[l] = norm(rng);
    values.row(t).head(Lr) =
        (spec.means.row(state).transpose() + factors[state] * z).transpose();
    for (int l = 0; l < spec.n_noise; ++l)
      values(t, Lr + l) = spec.noise_mean + noise_sd * norm(rng);
    dates[t] = d;
    d = d.next_weekday();
  }

  std::vector<std::string> names;
  for (int l = 1; l <= Lr; ++l) names.push_back("f" + std::to_string(l));
  for (int l = 1; l <= spec.n_noise; ++l) names.push_back("n" + std::to_string(l));
  return SyntheticSample{ReturnPanel(std::move(dates), std::move(names), std::move(values)),
                         std::move(states)};
}

}  // namespace daa
