#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "daa/metrics.hpp"

using namespace daa;

TEST_CASE("constant series") {
  std::vector<double> r(252, 0.0004);
  auto rep = compute_report(r);
  CHECK(rep.ann_return == Catch::Approx(0.1008));
  CHECK(rep.ann_vol == Catch::Approx(0.0).margin(1e-15));
  CHECK(rep.max_drawdown == 0.0);
  CHECK(rep.drawdown_days == 0);
  CHECK(rep.ir == 0.0);
}

TEST_CASE("two-step drawdown") {
  std::vector<double> r{0.1, -0.1};
  auto rep = compute_report(r);
  // wealth path 1.1 then 0.99: 10% off the peak for one day
  CHECK(rep.max_drawdown == Catch::Approx(-0.1).margin(1e-12));
  CHECK(rep.drawdown_days == 1);
}

TEST_CASE("iid normal draws have near-zero skew and excess kurtosis") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> norm(0.0, 0.01);
  std::vector<double> r(10000);
  for (auto& x : r) x = norm(rng);
  auto rep = compute_report(r);
  CHECK(std::abs(rep.skewness) < 0.1);
  CHECK(std::abs(rep.excess_kurtosis) < 0.2);
  CHECK(rep.ann_vol == Catch::Approx(0.01 * std::sqrt(252.0)).epsilon(0.05));
}

TEST_CASE("location shift moves only the return") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> norm(0.0, 0.01);
  std::vector<double> r(500), shifted(500);
  const double c = 0.002;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = norm(rng);
    shifted[i] = r[i] + c;
  }
  auto a = compute_report(r);
  auto b = compute_report(shifted);
  CHECK(b.ann_return == Catch::Approx(a.ann_return + 252.0 * c).margin(1e-12));
  CHECK(b.ann_vol == Catch::Approx(a.ann_vol).margin(1e-12));
  CHECK(b.skewness == Catch::Approx(a.skewness).margin(1e-12));
  CHECK(b.excess_kurtosis == Catch::Approx(a.excess_kurtosis).margin(1e-12));
}

TEST_CASE("positive scaling leaves the ratios unchanged") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> norm(0.0002, 0.01);
  std::vector<double> r(500), scaled(500);
  const double c = 3.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = norm(rng);
    scaled[i] = c * r[i];
  }
  auto a = compute_report(r);
  auto b = compute_report(scaled);
  CHECK(b.ann_return == Catch::Approx(c * a.ann_return).margin(1e-10));
  CHECK(b.ann_vol == Catch::Approx(c * a.ann_vol).margin(1e-10));
  CHECK(b.downside_risk == Catch::Approx(c * a.downside_risk).margin(1e-10));
  CHECK(b.ir == Catch::Approx(a.ir).margin(1e-10));
  CHECK(b.sortino == Catch::Approx(a.sortino).margin(1e-10));
  CHECK(b.skewness == Catch::Approx(a.skewness).margin(1e-10));
  CHECK(b.excess_kurtosis == Catch::Approx(a.excess_kurtosis).margin(1e-10));
}

TEST_CASE("all-positive series never draws down") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0.0001, 0.01);
  std::vector<double> r(300);
  for (auto& x : r) x = unif(rng);
  auto rep = compute_report(r);
  CHECK(rep.max_drawdown == 0.0);
  CHECK(rep.drawdown_days == 0);
  CHECK(rep.downside_risk == 0.0);
}

TEST_CASE("ratio identities from the definition") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> norm(0.0005, 0.012);
  std::vector<double> r(400);
  for (auto& x : r) x = norm(rng);
  auto rep = compute_report(r);
  REQUIRE(rep.ann_vol > 0);
  REQUIRE(rep.downside_risk > 0);
  CHECK(rep.ir == Catch::Approx(rep.ann_return / rep.ann_vol));
  CHECK(rep.sortino == Catch::Approx(rep.ann_return / rep.downside_risk));
  CHECK(rep.max_drawdown <= 0.0);
  CHECK(rep.drawdown_days >= 0);
}

TEST_CASE("report is a pure function") {
  std::vector<double> r{0.01, -0.02, 0.005, 0.0, 0.013, -0.007};
  auto a = compute_report(r);
  auto b = compute_report(r);
  CHECK(a.ann_return == b.ann_return);
  CHECK(a.skewness == b.skewness);
  CHECK(a.max_drawdown == b.max_drawdown);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(compute_report({0.01}), InsufficientDataError);
  CHECK_THROWS_AS(compute_report({0.01, 0.02}, 0), ParameterError);
}
