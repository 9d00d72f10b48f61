#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "daa/ghmm.hpp"
#include "daa/synthetic.hpp"
#include "test_support.hpp"

using namespace daa;
using testsupport::enumerate_paths;
using testsupport::make_panel;
using testsupport::random_hmm;

namespace {

HmmModel single_standard_normal() {
  HmmModel m;
  m.initial = Eigen::VectorXd::Ones(1);
  m.transition = Eigen::MatrixXd::Ones(1, 1);
  m.means = Eigen::MatrixXd::Zero(1, 1);
  m.covariances = {Eigen::MatrixXd::Identity(1, 1)};
  return m;
}

SyntheticSpec separated_two_state(double mu = 1.5, double sd = 0.5, int T = 5000,
                                  std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.n_states = 2;
  spec.transition.resize(2, 2);
  spec.transition << 0.95, 0.05, 0.1, 0.9;
  spec.means.resize(2, 2);
  spec.means << mu, mu, -mu, -mu;
  spec.covariances = {sd * sd * Eigen::MatrixXd::Identity(2, 2),
                      sd * sd * Eigen::MatrixXd::Identity(2, 2)};
  spec.length = T;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("log likelihood of a single standard normal point") {
  auto model = single_standard_normal();
  Eigen::MatrixXd y(1, 1);
  y << 0.0;
  CHECK(log_likelihood(model, make_panel(y)) == Catch::Approx(-0.9189385).margin(1e-6));
}

TEST_CASE("forward pass equals brute-force path enumeration") {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 20; ++rep) {
    int K = 2 + static_cast<int>(rng() % 2);
    int T = 2 + static_cast<int>(rng() % 5);
    auto model = random_hmm(K, 2, rng);
    Eigen::MatrixXd y(T, 2);
    std::normal_distribution<double> norm(0.0, 1.5);
    for (int t = 0; t < T; ++t)
      for (int l = 0; l < 2; ++l) y(t, l) = norm(rng);
    auto panel = make_panel(y);

    auto oracle = enumerate_paths(model, panel);
    CHECK(log_likelihood(model, panel) ==
          Catch::Approx(oracle.log_likelihood).margin(1e-9));
  }
}

TEST_CASE("states with identical emissions collapse to a single Gaussian") {
  std::mt19937_64 rng(7);
  auto base = single_standard_normal();
  HmmModel twin;
  twin.initial = Eigen::VectorXd::Constant(2, 0.5);
  twin.transition = Eigen::MatrixXd::Constant(2, 2, 0.5);
  twin.means = Eigen::MatrixXd::Zero(2, 1);
  twin.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};

  Eigen::MatrixXd y(6, 1);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int t = 0; t < 6; ++t) y(t, 0) = norm(rng);
  auto panel = make_panel(y);
  CHECK(log_likelihood(twin, panel) ==
        Catch::Approx(log_likelihood(base, panel)).margin(1e-10));
}

TEST_CASE("permutation invariance of the likelihood") {
  std::mt19937_64 rng(11);
  auto model = random_hmm(3, 2, rng);
  Eigen::MatrixXd y(8, 2);
  y.setRandom();
  auto panel = make_panel(y);

  auto permuted = permute_states(model, {2, 0, 1});
  CHECK(log_likelihood(model, panel) ==
        Catch::Approx(log_likelihood(permuted, panel)).epsilon(1e-12));
}

TEST_CASE("viterbi follows overwhelming emission evidence") {
  HmmModel m;
  m.initial = Eigen::VectorXd::Constant(2, 0.5);
  m.transition = Eigen::MatrixXd::Constant(2, 2, 0.5);
  m.means.resize(2, 1);
  m.means << -5.0, 5.0;
  m.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};

  Eigen::MatrixXd y(4, 1);
  y << -5.0, -5.0, 5.0, 5.0;
  auto path = viterbi_decode(m, make_panel(y));
  CHECK(path == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("viterbi path is the argmax over enumerated paths") {
  std::mt19937_64 rng(202);
  for (int rep = 0; rep < 20; ++rep) {
    auto model = random_hmm(2, 1, rng);
    Eigen::MatrixXd y(5, 1);
    std::normal_distribution<double> norm(0.0, 2.0);
    for (int t = 0; t < 5; ++t) y(t, 0) = norm(rng);
    auto panel = make_panel(y);

    auto oracle = enumerate_paths(model, panel);
    auto path = viterbi_decode(model, panel);

    double lp = std::log(model.initial[path[0]]) +
                testsupport::mvn_log_pdf(y.row(0).transpose(),
                                         model.means.row(path[0]).transpose(),
                                         model.covariances[path[0]]);
    for (int t = 1; t < 5; ++t)
      lp += std::log(model.transition(path[t - 1], path[t])) +
            testsupport::mvn_log_pdf(y.row(t).transpose(),
                                     model.means.row(path[t]).transpose(),
                                     model.covariances[path[t]]);
    CHECK(lp == Catch::Approx(oracle.best_path_log_prob).margin(1e-9));
  }
}

TEST_CASE("identity transition freezes the viterbi path at its best start") {
  HmmModel m;
  m.initial.resize(2);
  m.initial << 0.3, 0.7;
  m.transition = Eigen::MatrixXd::Identity(2, 2);
  m.means.resize(2, 1);
  m.means << 0.0, 0.2;
  m.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};

  Eigen::MatrixXd y(6, 1);
  y << 0.1, 0.0, 0.3, -0.2, 0.1, 0.2;
  auto path = viterbi_decode(m, make_panel(y));

  // Only constant paths have positive probability; pick the better one.
  double lp0 = std::log(m.initial[0]);
  double lp1 = std::log(m.initial[1]);
  for (int t = 0; t < 6; ++t) {
    lp0 += log_normal_pdf(y(t, 0), 0.0, 1.0);
    lp1 += log_normal_pdf(y(t, 0), 0.2, 1.0);
  }
  int expected = lp1 > lp0 ? 1 : 0;
  for (int s : path) CHECK(s == expected);
}

TEST_CASE("smoothed posteriors: degenerate single state") {
  auto model = single_standard_normal();
  Eigen::MatrixXd y(5, 1);
  y.setRandom();
  auto gamma = smoothed_state_probabilities(model, make_panel(y));
  for (int t = 0; t < 5; ++t) CHECK(gamma(t, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("smoothed posteriors match enumeration") {
  std::mt19937_64 rng(303);
  for (int rep = 0; rep < 10; ++rep) {
    auto model = random_hmm(2, 1, rng);
    Eigen::MatrixXd y(4, 1);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int t = 0; t < 4; ++t) y(t, 0) = norm(rng);
    auto panel = make_panel(y);

    auto oracle = enumerate_paths(model, panel);
    auto gamma = smoothed_state_probabilities(model, panel);
    for (int t = 0; t < 4; ++t) {
      CHECK(gamma.row(t).sum() == Catch::Approx(1.0).margin(1e-10));
      for (int i = 0; i < 2; ++i) {
        CHECK(gamma(t, i) >= 0.0);
        CHECK(gamma(t, i) <= 1.0);
        CHECK(gamma(t, i) == Catch::Approx(oracle.posteriors(t, i)).margin(1e-9));
      }
    }
  }
}

TEST_CASE("time-reversal symmetry of posteriors") {
  // Symmetric model: swapping states mirrors the posterior in time.
  HmmModel m;
  m.initial = Eigen::VectorXd::Constant(2, 0.5);
  m.transition.resize(2, 2);
  m.transition << 0.8, 0.2, 0.2, 0.8;
  m.means.resize(2, 1);
  m.means << 1.0, -1.0;
  m.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};

  Eigen::MatrixXd y(5, 1);
  y << 0.9, 0.4, 0.0, -0.4, -0.9;
  Eigen::MatrixXd y_rev = -y.colwise().reverse();
  // y reversed-and-negated equals y itself here, so compare directly.
  auto gamma = smoothed_state_probabilities(m, make_panel(y));
  auto gamma_rev = smoothed_state_probabilities(m, make_panel(y_rev));
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i < 2; ++i)
      CHECK(gamma(t, i) == Catch::Approx(gamma_rev(4 - t, 1 - i)).margin(1e-10));
}

TEST_CASE("baum-welch recovers a separated two-state model") {
  auto spec = separated_two_state();
  auto sample = generate_synthetic(spec);

  FitConfig cfg;
  cfg.seed = 5;
  cfg.n_restarts = 4;
  auto [model, report] = fit_baum_welch(sample.panel, 2, cfg);
  REQUIRE(report.converged);

  // sort_states puts the +mu state first, matching the generator layout
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l)
      CHECK(std::abs(model.means(i, l) - spec.means(i, l)) < 0.1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(model.transition(i, j) - spec.transition(i, j)) < 0.05);
}

TEST_CASE("EM trace is monotone and rows stay stochastic") {
  auto spec = separated_two_state(1.0, 0.8, 600, 17);
  auto sample = generate_synthetic(spec);
  FitConfig cfg;
  cfg.seed = 23;
  cfg.n_restarts = 3;
  auto [model, report] = fit_baum_welch(sample.panel, 2, cfg);

  for (std::size_t i = 1; i < report.trace.size(); ++i)
    CHECK(report.trace[i] >= report.trace[i - 1] - 1e-8 * std::abs(report.trace[i - 1]));
  CHECK(std::abs(model.initial.sum() - 1.0) < 1e-10);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(model.transition.row(i).sum() - 1.0) < 1e-10);
    Eigen::LLT<Eigen::MatrixXd> llt(model.covariances[i]);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("K=1 fit converges to sample moments in two iterations") {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd y(200, 2);
  std::normal_distribution<double> norm(0.01, 0.02);
  for (int t = 0; t < 200; ++t)
    for (int l = 0; l < 2; ++l) y(t, l) = norm(rng);
  auto panel = make_panel(y);

  FitConfig cfg;
  cfg.n_restarts = 1;
  cfg.cov_reg = 0.0;
  auto [model, report] = fit_baum_welch(panel, 1, cfg);
  CHECK(report.converged);
  CHECK(report.n_iterations <= 2);

  Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::MatrixXd centered = y.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / 200.0;  // EM uses 1/T weights
  CHECK((model.means.row(0) - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((model.covariances[0] - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant series is rejected, not silently fitted") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(50, 2, 0.001);
  auto panel = make_panel(y);
  FitConfig cfg;
  cfg.n_restarts = 2;
  CHECK_THROWS_AS(fit_baum_welch(panel, 2, cfg), ParameterError);
}

TEST_CASE("insufficient data and shape errors") {
  Eigen::MatrixXd y(2, 1);
  y << 0.1, 0.2;
  auto panel = make_panel(y);
  CHECK_THROWS_AS(fit_baum_welch(panel, 2), InsufficientDataError);

  auto model = single_standard_normal();
  Eigen::MatrixXd wide(4, 2);
  wide.setRandom();
  CHECK_THROWS_AS(log_likelihood(model, make_panel(wide)), ShapeError);
  CHECK_THROWS_AS(viterbi_decode(model, make_panel(wide)), ShapeError);
  CHECK_THROWS_AS(smoothed_state_probabilities(model, make_panel(wide)), ShapeError);
}

TEST_CASE("bic arithmetic and free-parameter count") {
  // K=1, L=1: d = 0 + 0 + 1 + 1 = 2. Build a model whose log-likelihood on a
  // tiny panel is known, then check against the closed formula.
  auto model = single_standard_normal();
  Eigen::MatrixXd y(100, 1);
  y.setZero();
  // Panel of zeros under N(0,1): ll = 100 * log N(0;0,1)
  auto panel = make_panel(y);
  double ll = log_likelihood(model, panel);
  CHECK(ll == Catch::Approx(100.0 * -0.918938533204672).margin(1e-9));
  CHECK(bic(model, panel) ==
        Catch::Approx(-2.0 * ll + 2.0 * std::log(100.0)).margin(1e-9));

  // The spec's worked value: ll = -150, T = 100 -> BIC = 309.2103.
  double worked = -2.0 * -150.0 + 2.0 * std::log(100.0);
  CHECK(worked == Catch::Approx(309.2103).margin(1e-4));
}

TEST_CASE("adding a state never hurts training likelihood (shared init)") {
  auto spec = separated_two_state(0.8, 1.0, 400, 19);
  auto sample = generate_synthetic(spec);
  FitConfig cfg;
  cfg.n_restarts = 1;
  cfg.seed = 3;
  auto [m1, r1] = fit_baum_welch(sample.panel, 1, cfg);

  // Duplicate the single state: same likelihood as the K=1 model, then EM
  // can only improve from there.
  HmmModel init;
  init.initial = Eigen::VectorXd::Constant(2, 0.5);
  init.transition = Eigen::MatrixXd::Constant(2, 2, 0.5);
  init.means.resize(2, m1.means.cols());
  init.means.row(0) = m1.means.row(0);
  init.means.row(1) = m1.means.row(0) * 1.0001;
  init.covariances = {m1.covariances[0], m1.covariances[0]};

  auto [m2, r2] = fit_baum_welch_from(sample.panel, init, cfg);
  CHECK(r2.log_likelihood >= r1.log_likelihood - 1e-6 * std::abs(r1.log_likelihood));
}

TEST_CASE("select_n_states: singleton and table shape") {
  auto spec = separated_two_state(1.2, 0.6, 300, 29);
  auto sample = generate_synthetic(spec);
  FitConfig cfg;
  cfg.n_restarts = 2;
  cfg.max_iter = 100;

  auto single = select_n_states(sample.panel, {1}, cfg);
  CHECK(single.best_k == 1);
  REQUIRE(single.table.size() == 1);

  auto sel = select_n_states(sample.panel, {2, 3, 4}, cfg);
  REQUIRE(sel.table.size() == 3);
  for (const auto& row : sel.table) CHECK(std::isfinite(row.bic));
}

TEST_CASE("restart merge is deterministic") {
  auto spec = separated_two_state(1.0, 0.7, 300, 41);
  auto sample = generate_synthetic(spec);
  FitConfig cfg;
  cfg.seed = 77;
  cfg.n_restarts = 4;
  auto [ma, ra] = fit_baum_welch(sample.panel, 2, cfg);
  auto [mb, rb] = fit_baum_welch(sample.panel, 2, cfg);
  CHECK(ra.restart_index == rb.restart_index);
  CHECK((ma.means.array() == mb.means.array()).all());
  CHECK((ma.transition.array() == mb.transition.array()).all());
}
