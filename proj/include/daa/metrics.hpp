#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "daa/errors.hpp"

namespace daa {

// Performance statistics over a daily net-return series. Annualization uses
// simple scaling: mean * P and std * sqrt(P) with P periods per year.
struct PerformanceReport {
  double ann_return = 0.0;
  double ann_vol = 0.0;
  double ir = 0.0;        // ann_return / ann_vol (0 when ann_vol == 0)
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double downside_risk = 0.0;  // rms of negative returns, annualized
  double sortino = 0.0;        // ann_return / downside_risk (0 when 0)
  double max_drawdown = 0.0;   // <= 0, fractional decline from running peak
  long drawdown_days = 0;      // longest spell below the running peak
};

inline PerformanceReport compute_report(const std::vector<double>& returns,
                                        int periods_per_year = 252,
                                        double downside_threshold = 0.0) {
  const std::size_t n = returns.size();
  if (n < 2) throw InsufficientDataError("need at least 2 returns");
  if (periods_per_year < 1) throw ParameterError("periods_per_year must be >= 1");

  double mean = 0.0, rmin = returns[0], rmax = returns[0];
  for (double r : returns) {
    mean += r;
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  mean /= static_cast<double>(n);
  const bool constant = rmin == rmax;
  if (constant) mean = rmin;  // avoid rounding residue in the moments below

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, var_sample = 0.0, downside2 = 0.0;
  for (double r : returns) {
    const double d = r - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    const double neg = std::min(r - downside_threshold, 0.0);
    downside2 += neg * neg;
  }
  var_sample = m2 / static_cast<double>(n - 1);
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  downside2 /= static_cast<double>(n);

  PerformanceReport rep;
  const double p = static_cast<double>(periods_per_year);
  rep.ann_return = mean * p;
  rep.ann_vol = std::sqrt(var_sample) * std::sqrt(p);
  rep.ir = rep.ann_vol > 0 ? rep.ann_return / rep.ann_vol : 0.0;
  if (m2 > 0) {
    rep.skewness = m3 / std::pow(m2, 1.5);
    rep.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  rep.downside_risk = std::sqrt(downside2) * std::sqrt(p);
  rep.sortino = rep.downside_risk > 0 ? rep.ann_return / rep.downside_risk : 0.0;

  // drawdown on the compounded wealth curve, starting from wealth 1
  double wealth = 1.0, peak = 1.0;
  long current_run = 0;
  for (double r : returns) {
    wealth *= 1.0 + r;
    if (wealth >= peak) {
      peak = wealth;
      current_run = 0;
    } else {
      ++current_run;
      rep.drawdown_days = std::max(rep.drawdown_days, current_run);
      rep.max_drawdown = std::min(rep.max_drawdown, wealth / peak - 1.0);
    }
  }
  return rep;
}

}  // namespace daa
