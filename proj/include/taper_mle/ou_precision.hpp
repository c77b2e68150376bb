#pragma once

// Closed-form tridiagonal precision of the exponential (Ornstein-Uhlenbeck)
// covariance on a sorted design: V^{-1} = D^{-1} B with D diagonal and B
// tridiagonal with unit diagonal.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"

namespace taper_mle {

class OuPrecision {
 public:
  OuPrecision(std::vector<double> d, std::vector<double> b_sub, std::vector<double> b_super, double log_det)
      : d_(std::move(d)), b_sub_(std::move(b_sub)), b_super_(std::move(b_super)), log_det_(log_det) {}

  std::size_t size() const noexcept { return d_.size(); }

  /// Conditional variances.
  std::span<const double> d() const noexcept { return d_; }
  /// B(k + 1, k).
  std::span<const double> b_sub() const noexcept { return b_sub_; }
  /// B(k, k + 1).
  std::span<const double> b_super() const noexcept { return b_super_; }

  /// Entry (i, j) of V^{-1}.
  double precision(std::size_t i, std::size_t j) const {
    if (i == j) return 1.0 / d_[i];
    if (i == j + 1) return b_sub_[j] / d_[i];
    if (j == i + 1) return b_super_[i] / d_[i];
    return 0.0;
  }

  /// V^{-1} x.
  std::vector<double> apply(std::span<const double> x) const {
    check(x);
    const std::size_t n = size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      if (i > 0) s += b_sub_[i - 1] * x[i - 1];
      if (i + 1 < n) s += b_super_[i] * x[i + 1];
      y[i] = s / d_[i];
    }
    return y;
  }

  double quad_form(std::span<const double> x) const {
    const auto y = apply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += x[i] * y[i];
    return s;
  }

  /// log det V (not of the precision).
  double log_det_covariance() const noexcept { return log_det_; }

  Eigen::MatrixXd to_dense() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = std::max<Eigen::Index>(0, i - 1); j <= std::min(n - 1, i + 1); ++j) {
        p(i, j) = precision(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
    return p;
  }

 private:
  void check(std::span<const double> x) const {
    if (x.size() != size()) throw InvalidArgument("OU precision: size mismatch");
  }

  std::vector<double> d_;
  std::vector<double> b_sub_;
  std::vector<double> b_super_;
  double log_det_;
};

inline OuPrecision ou_precision(const Design& design, double theta, double sigma2) {
  const std::size_t n = design.size();
  if (n < 2) throw InvalidArgument("ou_precision requires at least two locations");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw InvalidArgument("theta must be positive and finite");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be positive and finite");

  // e[k] = exp(-theta gap_k), q[k] = 1 - exp(-2 theta gap_k) for k = 1..n-1.
  std::vector<double> e(n), q(n);
  double log_det = std::log(sigma2);
  for (std::size_t k = 1; k < n; ++k) {
    const double g = design.gap(k);
    e[k] = std::exp(-theta * g);
    q[k] = -std::expm1(-2.0 * theta * g);
    log_det += std::log(sigma2 * q[k]);
  }

  std::vector<double> d(n), b_sub(n - 1), b_super(n - 1);
  d[0] = sigma2 * q[1];
  b_super[0] = -e[1];
  d[n - 1] = sigma2 * q[n - 1];
  b_sub[n - 2] = -e[n - 1];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double den = -std::expm1(-2.0 * theta * (design.gap(i) + design.gap(i + 1)));
    d[i] = sigma2 * q[i] * q[i + 1] / den;
    b_sub[i - 1] = -e[i] * q[i + 1] / den;
    b_super[i] = -e[i + 1] * q[i] / den;
  }
  return OuPrecision(std::move(d), std::move(b_sub), std::move(b_super), log_det);
}

}  // namespace taper_mle
