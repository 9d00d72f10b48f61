#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "daa/portfolio.hpp"
#include "test_support.hpp"

using namespace daa;

namespace {

RegimeMoments make_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& v) {
  return RegimeMoments{mu, v};
}

RegimeMoments random_moments(int L, std::mt19937_64& rng, double mean_scale = 0.01) {
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd mu(L);
  for (int j = 0; j < L; ++j) mu[j] = mean_scale * norm(rng);
  Eigen::MatrixXd v = testsupport::random_psd(L, rng, 0.3) * 1e-4;
  return make_moments(mu, v);
}

}  // namespace

TEST_CASE("max_return greedy fill") {
  Eigen::VectorXd mu(3);
  mu << 0.03, 0.01, 0.02;
  auto m = make_moments(mu, Eigen::MatrixXd::Identity(3, 3));
  auto w = max_return(m);
  CHECK(w.w[0] == Catch::Approx(0.8));
  CHECK(w.w[1] == Catch::Approx(0.0));
  CHECK(w.w[2] == Catch::Approx(0.2));
  w.validate(0.8);
}

TEST_CASE("max_return breaks ties toward lower index") {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(3, 0.02);
  auto m = make_moments(mu, Eigen::MatrixXd::Identity(3, 3));
  auto w = max_return(m, 0.8);
  CHECK(w.w[0] == Catch::Approx(0.8));
  CHECK(w.w[1] == Catch::Approx(0.2));
  CHECK(w.w[2] == Catch::Approx(0.0));
}

TEST_CASE("max_return beats the lattice") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = random_moments(4, rng);
    auto w = max_return(m, 0.8);
    auto oracle = grid_oracle(m, PortfolioMethod::MaxReturn, 0.05, 0.8);
    CHECK(m.mean.dot(w.w) >= oracle.objective - 1e-9);
  }
}

TEST_CASE("max_return rejects infeasible caps") {
  Eigen::VectorXd mu(3);
  mu << 0.1, 0.2, 0.3;
  auto m = make_moments(mu, Eigen::MatrixXd::Identity(3, 3));
  CHECK_THROWS_AS(max_return(m, 0.3), ParameterError);   // 3 * 0.3 < 1
  CHECK_THROWS_AS(max_return(m, 1.5), ParameterError);
}

TEST_CASE("dyn weighting") {
  Eigen::VectorXd mu(2);
  mu << 0.01, 0.03;
  auto w = dyn(make_moments(mu, Eigen::MatrixXd::Identity(2, 2)));
  CHECK(w.w[0] == Catch::Approx(0.25));
  CHECK(w.w[1] == Catch::Approx(0.75));

  Eigen::VectorXd mixed(3);
  mixed << 0.01, -0.001, 0.02;
  auto w2 = dyn(make_moments(mixed, Eigen::MatrixXd::Identity(3, 3)));
  for (int j = 0; j < 3; ++j) CHECK(w2.w[j] == Catch::Approx(1.0 / 3));

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.02);
  auto w3 = dyn(make_moments(flat, Eigen::MatrixXd::Identity(4, 4)));
  for (int j = 0; j < 4; ++j) CHECK(w3.w[j] == Catch::Approx(0.25));
}

TEST_CASE("max_sharpe equal means reduces to minimum variance") {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(2, 0.01);
  Eigen::MatrixXd v(2, 2);
  v << 0.01, 0.0, 0.0, 0.04;
  auto w = max_sharpe(make_moments(mu, v));
  CHECK(w.w[0] == Catch::Approx(0.8).margin(1e-5));
  CHECK(w.w[1] == Catch::Approx(0.2).margin(1e-5));
  CHECK_FALSE(w.min_variance_fallback);
}

TEST_CASE("max_sharpe degenerate identical assets stays feasible") {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(2, 0.01);
  Eigen::MatrixXd v(2, 2);
  v << 0.02, 0.02, 0.02, 0.02;  // correlation 1, equal variance
  auto w = max_sharpe(make_moments(mu, v));
  w.validate();
}

TEST_CASE("max_sharpe matches grid search") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = random_moments(3, rng);
    m.mean[0] = std::abs(m.mean[0]) + 1e-4;  // keep at least one positive mean
    auto w = max_sharpe(m);
    auto oracle = grid_oracle(m, PortfolioMethod::Sharpe, 0.01);
    double solver_val = portfolio_objective(m, PortfolioMethod::Sharpe, w.w);
    CHECK(solver_val >= oracle.objective - 1e-3 * std::abs(oracle.objective) - 1e-12);
  }
}

TEST_CASE("max_sharpe with no positive mean returns flagged min-variance point") {
  Eigen::VectorXd mu(3);
  mu << -0.01, -0.02, -0.005;
  std::mt19937_64 rng(31);
  Eigen::MatrixXd v = testsupport::random_psd(3, rng, 0.5) * 1e-4;
  auto w = max_sharpe(make_moments(mu, v));
  CHECK(w.min_variance_fallback);
  CHECK(w.method == PortfolioMethod::Sharpe);
  auto mv = min_variance(make_moments(mu, v));
  CHECK((w.w - mv.w).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("risk parity closed form for diagonal covariance") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3, 3);
  v.diagonal() << 0.04, 0.01, 0.0025;
  auto w = risk_parity(make_moments(mu, v));
  Eigen::VectorXd expect(3);
  expect << 1.0 / 0.2, 1.0 / 0.1, 1.0 / 0.05;
  expect /= expect.sum();
  for (int j = 0; j < 3; ++j) CHECK(w.w[j] == Catch::Approx(expect[j]).margin(1e-8));
}

TEST_CASE("risk parity on identity is equal weight") {
  auto w = risk_parity(make_moments(Eigen::VectorXd::Zero(5), Eigen::MatrixXd::Identity(5, 5)));
  for (int j = 0; j < 5; ++j) CHECK(w.w[j] == Catch::Approx(0.2).margin(1e-10));
}

TEST_CASE("risk parity equalizes contributions on random instances") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = random_moments(4, rng);
    auto w = risk_parity(m);
    Eigen::MatrixXd v = m.prepared_covariance();
    Eigen::VectorXd rc = w.w.array() * (v * w.w).array();
    CHECK(rc.maxCoeff() - rc.minCoeff() <= 1e-8 * w.w.dot(v * w.w));
  }
}

TEST_CASE("max diversification diagonal covariance") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3, 3);
  v.diagonal() << 0.04, 0.01, 0.0025;
  auto w = max_diversification(make_moments(mu, v));
  Eigen::VectorXd expect(3);
  expect << 1.0 / 0.2, 1.0 / 0.1, 1.0 / 0.05;
  expect /= expect.sum();
  for (int j = 0; j < 3; ++j) CHECK(w.w[j] == Catch::Approx(expect[j]).margin(1e-5));

  // identical vols: ratio at optimum is sqrt(L)
  Eigen::MatrixXd id = 0.01 * Eigen::MatrixXd::Identity(3, 3);
  auto w2 = max_diversification(make_moments(mu, id));
  double ratio = portfolio_objective(make_moments(mu, id), PortfolioMethod::MaxDiversification, w2.w);
  CHECK(ratio == Catch::Approx(std::sqrt(3.0)).margin(1e-5));
}

TEST_CASE("max diversification with perfectly correlated assets is flat") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd v(2, 2);
  v << 0.01, 0.01, 0.01, 0.01;
  auto w = max_diversification(make_moments(mu, v));
  w.validate();
}

TEST_CASE("max diversification matches grid search") {
  std::mt19937_64 rng(47);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = random_moments(3, rng);
    auto w = max_diversification(m);
    auto oracle = grid_oracle(m, PortfolioMethod::MaxDiversification, 0.01);
    double solver_val = portfolio_objective(m, PortfolioMethod::MaxDiversification, w.w);
    CHECK(solver_val >= oracle.objective - 1e-3 * std::abs(oracle.objective) - 1e-12);
  }
}

TEST_CASE("min variance diagonal closed form and identity") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd v(2, 2);
  v << 0.01, 0.0, 0.0, 0.04;
  auto w = min_variance(make_moments(mu, v));
  CHECK(w.w[0] == Catch::Approx(0.8).margin(1e-8));
  CHECK(w.w[1] == Catch::Approx(0.2).margin(1e-8));

  auto w2 = min_variance(make_moments(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4)));
  for (int j = 0; j < 4; ++j) CHECK(w2.w[j] == Catch::Approx(0.25).margin(1e-8));
}

TEST_CASE("min variance beats the lattice") {
  std::mt19937_64 rng(53);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = random_moments(5, rng);
    auto w = min_variance(m);
    auto oracle = grid_oracle(m, PortfolioMethod::MinVariance, 0.02);
    double solver_val = portfolio_objective(m, PortfolioMethod::MinVariance, w.w);
    CHECK(solver_val <= oracle.objective + 1e-6 * std::abs(oracle.objective) + 1e-15);
  }
}

TEST_CASE("min variance never exceeds equal-weight variance") {
  std::mt19937_64 rng(59);
  for (int rep = 0; rep < 20; ++rep) {
    auto m = random_moments(4, rng);
    auto w = min_variance(m);
    auto ew = equal_weight(4);
    Eigen::MatrixXd v = m.prepared_covariance();
    CHECK(w.w.dot(v * w.w) <= ew.w.dot(v * ew.w) + 1e-12);
  }
}

TEST_CASE("equal weight") {
  auto w5 = equal_weight(5);
  for (int j = 0; j < 5; ++j) CHECK(w5.w[j] == Catch::Approx(0.2));
  auto w1 = equal_weight(1);
  CHECK(w1.w[0] == 1.0);
  auto w6 = equal_weight(6);
  CHECK(w6.w.sum() == 1.0);
  CHECK_THROWS_AS(equal_weight(0), ParameterError);
}

TEST_CASE("grid oracle tiny cases") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  auto m = make_moments(mu, Eigen::MatrixXd::Identity(2, 2));
  auto res = grid_oracle(m, PortfolioMethod::MinVariance, 0.5, 1.0);
  CHECK(res.points_evaluated == 3);  // (0,1), (0.5,0.5), (1,0)
  CHECK(res.weights[0] == Catch::Approx(0.5));
  CHECK(res.weights[1] == Catch::Approx(0.5));

  Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 0.01);
  auto m1 = make_moments(one, Eigen::MatrixXd::Identity(1, 1));
  for (auto method : {PortfolioMethod::MaxReturn, PortfolioMethod::Sharpe,
                      PortfolioMethod::RiskParity, PortfolioMethod::MaxDiversification,
                      PortfolioMethod::MinVariance, PortfolioMethod::Dyn,
                      PortfolioMethod::EqualWeight}) {
    auto r1 = grid_oracle(m1, method, 0.1, 1.0);
    CHECK(r1.weights[0] == Catch::Approx(1.0));
  }

  std::mt19937_64 rng(61);
  auto m3 = random_moments(3, rng);
  m3.mean = m3.mean.cwiseAbs();
  auto sharpe_oracle = grid_oracle(m3, PortfolioMethod::Sharpe, 0.1);
  CHECK(sharpe_oracle.points_evaluated == 66);
  auto solver = max_sharpe(m3);
  CHECK(sharpe_oracle.objective <=
        portfolio_objective(m3, PortfolioMethod::Sharpe, solver.w) + 1e-9);

  CHECK_THROWS_AS(grid_oracle(random_moments(3, rng), PortfolioMethod::Sharpe, 0.0),
                  ParameterError);
  std::mt19937_64 rng6(3);
  Eigen::VectorXd mu6 = Eigen::VectorXd::Zero(6);
  CHECK_THROWS_AS(
      grid_oracle(make_moments(mu6, Eigen::MatrixXd::Identity(6, 6)),
                  PortfolioMethod::MinVariance, 0.1),
      ParameterError);
}

TEST_CASE("scale invariance of the optimizers") {
  std::mt19937_64 rng(67);
  auto m = random_moments(3, rng);
  m.mean = m.mean.cwiseAbs() + Eigen::VectorXd::Constant(3, 1e-4);

  auto w_sharpe = max_sharpe(m);
  auto m_scaled = m;
  m_scaled.covariance *= 7.0;
  auto w_sharpe_scaled = max_sharpe(m_scaled);
  CHECK((w_sharpe.w - w_sharpe_scaled.w).cwiseAbs().maxCoeff() < 1e-4);

  auto w_mr = max_return(m);
  auto m_mu_scaled = m;
  m_mu_scaled.mean *= 3.0;
  auto w_mr_scaled = max_return(m_mu_scaled);
  CHECK((w_mr.w - w_mr_scaled.w).cwiseAbs().maxCoeff() < 1e-12);

  auto w_dyn = dyn(m);
  auto w_dyn_scaled = dyn(m_mu_scaled);
  CHECK((w_dyn.w - w_dyn_scaled.w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all constructors return feasible weights") {
  std::mt19937_64 rng(71);
  for (int rep = 0; rep < 20; ++rep) {
    int L = 2 + static_cast<int>(rng() % 3);
    auto m = random_moments(L, rng);
    for (auto method : {PortfolioMethod::MaxReturn, PortfolioMethod::Dyn,
                        PortfolioMethod::Sharpe, PortfolioMethod::RiskParity,
                        PortfolioMethod::MaxDiversification, PortfolioMethod::MinVariance,
                        PortfolioMethod::EqualWeight}) {
      double cap = method == PortfolioMethod::MaxReturn ? 0.8 : 1.0;
      auto w = build_portfolio(m, method, cap);
      w.validate(cap);
      CHECK(w.method == method);
    }
  }
}

TEST_CASE("non-symmetric or indefinite covariance is rejected") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(min_variance(make_moments(mu, bad)), ParameterError);

  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(min_variance(make_moments(mu, indef)), ParameterError);
}
