#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "daa/errors.hpp"

namespace daa {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow; handles -inf operands.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

// Multivariate normal with cached Cholesky factor.
class MvNormal {
public:
  MvNormal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) : mean_(mean) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw ShapeError("covariance/mean dimension mismatch");
    llt_.compute(cov);
    if (llt_.info() != Eigen::Success)
      throw NumericalError("covariance is not positive definite");
    log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd d = x - mean_;
    llt_.matrixL().solveInPlace(d);
    return -0.5 * (mean_.size() * kLog2Pi + log_det_ + d.squaredNorm());
  }

private:
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

// Symmetric PSD factor for sampling: U sqrt(max(eig, 0)) with a tolerance for
// slightly negative eigenvalues from rounding.
inline Eigen::MatrixXd psd_sampling_factor(const Eigen::MatrixXd& cov, double tol = 1e-10) {
  if (cov.rows() != cov.cols()) throw ShapeError("covariance must be square");
  if (!cov.isApprox(cov.transpose(), 1e-12))
    throw ParameterError("covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() < -tol)
    throw ParameterError("covariance is not positive semidefinite");
  Eigen::VectorXd sqrt_ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * sqrt_ev.asDiagonal();
}

// Deterministic per-task sub-seeds so parallel work is schedule independent.
inline std::vector<std::uint64_t> spawn_seeds(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> out(n);
  for (auto& s : out) s = rng();
  return out;
}

// Euclidean projection onto {w >= 0, sum w = 1}.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  int support = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cum += u[i];
    double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0) {
      theta = t;
      support = static_cast<int>(i + 1);
    }
  }
  (void)support;
  return (v.array() - theta).cwiseMax(0.0);
}

}  // namespace daa
