#pragma once

// Covariance matrix assembly (dense and taper-banded), Cholesky factorizations,
// log-determinants and quadratic forms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "taper_mle/covmodel.hpp"
#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"

namespace taper_mle {

/// Dense symmetric positive definite matrix.
class DenseSpd {
 public:
  DenseSpd() = default;
  explicit DenseSpd(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InvalidArgument("DenseSpd must be square");
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& matrix() const noexcept { return m_; }

 private:
  Eigen::MatrixXd m_;
};

/// Symmetric band matrix. Only the lower band is stored, column by column:
/// entry (i, j) with 0 <= i - j <= b lives at data[j * (b + 1) + (i - j)].
class BandedSpd {
 public:
  BandedSpd() = default;
  BandedSpd(std::size_t n, std::size_t bandwidth)
      : n_(n), b_(std::min(bandwidth, n == 0 ? 0 : n - 1)), data_(n * (b_ + 1), 0.0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t bandwidth() const noexcept { return b_; }

  bool in_band(std::size_t i, std::size_t j) const noexcept {
    return (i >= j ? i - j : j - i) <= b_;
  }

  double operator()(std::size_t i, std::size_t j) const noexcept {
    if (i < j) std::swap(i, j);
    return i - j <= b_ ? data_[j * (b_ + 1) + (i - j)] : 0.0;
  }

  /// Lower-band element, requires i >= j and i - j <= bandwidth.
  double& lower(std::size_t i, std::size_t j) noexcept { return data_[j * (b_ + 1) + (i - j)]; }
  double lower(std::size_t i, std::size_t j) const noexcept { return data_[j * (b_ + 1) + (i - j)]; }

  /// Contiguous lower-band column j: rows j .. j + bandwidth (clipped entries stay zero).
  std::span<double> column(std::size_t j) noexcept { return {data_.data() + j * (b_ + 1), b_ + 1}; }
  std::span<const double> column(std::size_t j) const noexcept {
    return {data_.data() + j * (b_ + 1), b_ + 1};
  }

  std::vector<double> multiply(std::span<const double> x) const {
    if (x.size() != n_) throw InvalidArgument("banded multiply: size mismatch");
    std::vector<double> y(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      const auto col = column(j);
      y[j] += col[0] * x[j];
      const std::size_t last = std::min(n_ - 1, j + b_);
      for (std::size_t i = j + 1; i <= last; ++i) {
        y[i] += col[i - j] * x[j];
        y[j] += col[i - j] * x[i];
      }
    }
    return y;
  }

  DenseSpd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t last = std::min(n_ - 1, j + b_);
      for (std::size_t i = j; i <= last; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        m(ii, jj) = m(jj, ii) = lower(i, j);
      }
    }
    return DenseSpd(std::move(m));
  }

 private:
  std::size_t n_ = 0;
  std::size_t b_ = 0;
  std::vector<double> data_;
};

/// Writes the lower band as coordinate text, one "i j value" line per stored entry.
inline void write_coordinates(std::ostream& os, const BandedSpd& m) {
  const auto prec = os.precision(17);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const std::size_t last = std::min(m.size() - 1, j + m.bandwidth());
    for (std::size_t i = j; i <= last; ++i) os << i << ' ' << j << ' ' << m.lower(i, j) << '\n';
  }
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Assembly

namespace detail {

// Gaps below this fraction of the unit domain make the covariance numerically singular.
inline constexpr double kMinSeparation = 1e-12;

inline void check_separation(const Design& d) {
  for (std::size_t k = 1; k < d.size(); ++k) {
    if (d.gap(k) < kMinSeparation) {
      throw SingularDesign("locations " + std::to_string(k - 1) + " and " + std::to_string(k) +
                           " are too close for a nonsingular covariance");
    }
  }
}

}  // namespace detail

/// Largest count of later points strictly closer than `support` to any point.
inline std::size_t support_bandwidth(const Design& d, double support) {
  const std::size_t n = d.size();
  if (!std::isfinite(support)) return n == 0 ? 0 : n - 1;
  std::size_t b = 0;
  std::size_t hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hi = std::max(hi, i);
    while (hi + 1 < n && d[hi + 1] - d[i] < support) ++hi;
    b = std::max(b, hi - i);
  }
  return b;
}

template <class LagFn>
DenseSpd dense_from_lags(const Design& d, LagFn&& k) {
  detail::check_separation(d);
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m(j, j) = k(0.0);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      m(i, j) = m(j, i) = k(d[static_cast<std::size_t>(i)] - d[static_cast<std::size_t>(j)]);
    }
  }
  return DenseSpd(std::move(m));
}

/// Band matrix of k(|t_i - t_j|) for lags below `support`; entries at or beyond
/// `support` are exact zeros.
template <class LagFn>
BandedSpd banded_from_lags(const Design& d, double support, LagFn&& k) {
  detail::check_separation(d);
  const std::size_t n = d.size();
  BandedSpd m(n, support_bandwidth(d, support));
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t last = std::min(n - 1, j + m.bandwidth());
    for (std::size_t i = j; i <= last; ++i) {
      const double h = d[i] - d[j];
      m.lower(i, j) = h < support ? k(h) : 0.0;
    }
  }
  return m;
}

inline DenseSpd build_dense(const Design& d, const CovModel& model) {
  const CovarianceFunction k(model);
  return dense_from_lags(d, k);
}

/// The tapered covariance matrix in dense storage (same entries as build_tapered).
inline DenseSpd build_dense_tapered(const Design& d, const CovModel& model, const TaperSpec& taper) {
  const CovarianceFunction k(model);
  return dense_from_lags(d, [&](double h) {
    const double t = taper_value(taper, h);
    return t == 0.0 ? 0.0 : k(h) * t;
  });
}

inline BandedSpd build_tapered(const Design& d, const CovModel& model, const TaperSpec& taper) {
  const CovarianceFunction k(model);
  return banded_from_lags(d, taper.support(), [&](double h) {
    const double t = taper_value(taper, h);
    return t == 0.0 ? 0.0 : k(h) * t;
  });
}

inline DenseSpd build_dense_dtheta(const Design& d, const CovModel& model) {
  const CovarianceFunction k(model);
  return dense_from_lags(d, [&](double h) { return k.dtheta(h); });
}

inline BandedSpd build_tapered_dtheta(const Design& d, const CovModel& model, const TaperSpec& taper) {
  const CovarianceFunction k(model);
  return banded_from_lags(d, taper.support(), [&](double h) {
    const double t = taper_value(taper, h);
    return t == 0.0 ? 0.0 : k.dtheta(h) * t;
  });
}

// ---------------------------------------------------------------------------
// Factorizations

/// Dense Cholesky factor L with A = L L'.
class DenseCholesky {
 public:
  explicit DenseCholesky(const DenseSpd& a) : l_(a.matrix()) {
    // Eigen's blocked kernel reports the failing column, which LLT<> discards.
    const Eigen::Index failed = Eigen::internal::llt_inplace<double, Eigen::Lower>::blocked(l_);
    if (failed >= 0) throw FactorizationError(static_cast<std::size_t>(failed));
    l_.triangularView<Eigen::StrictlyUpper>().setZero();
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(l_.rows()); }

  double log_det() const { return 2.0 * l_.diagonal().array().log().sum(); }

  std::vector<double> solve(std::span<const double> rhs) const {
    check(rhs);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(rhs.data(), l_.rows());
    l_.triangularView<Eigen::Lower>().solveInPlace(y);
    l_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return {y.data(), y.data() + y.size()};
  }

  /// x' A^{-1} x = |L^{-1} x|^2.
  double quad_form(std::span<const double> x) const {
    check(x);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(x.data(), l_.rows());
    l_.triangularView<Eigen::Lower>().solveInPlace(y);
    return y.squaredNorm();
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd y = rhs;
    l_.triangularView<Eigen::Lower>().solveInPlace(y);
    l_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return y;
  }

  Eigen::MatrixXd inverse() const { return solve(Eigen::MatrixXd::Identity(l_.rows(), l_.cols())); }

  const Eigen::MatrixXd& factor() const noexcept { return l_; }

 private:
  void check(std::span<const double> v) const {
    if (v.size() != size()) throw InvalidArgument("Cholesky solve: size mismatch");
  }

  Eigen::MatrixXd l_;
};

/// Banded Cholesky factor; L keeps the bandwidth of A and nothing outside it is touched.
class BandedCholesky {
 public:
  explicit BandedCholesky(BandedSpd a) : l_(std::move(a)) {
    const std::size_t n = l_.size();
    const std::size_t b = l_.bandwidth();
    for (std::size_t j = 0; j < n; ++j) {
      auto col = l_.column(j);
      const double pivot = col[0];
      if (!(pivot > 0.0) || !std::isfinite(pivot)) throw FactorizationError(j);
      const double root = std::sqrt(pivot);
      const std::size_t len = std::min(b, n - 1 - j);
      col[0] = root;
      for (std::size_t r = 1; r <= len; ++r) col[r] /= root;
      // Rank-one update of the trailing block inside the band.
      for (std::size_t c = 1; c <= len; ++c) {
        const double lcj = col[c];
        if (lcj == 0.0) continue;
        auto target = l_.column(j + c);
        for (std::size_t r = c; r <= len; ++r) target[r - c] -= col[r] * lcj;
      }
    }
  }

  std::size_t size() const noexcept { return l_.size(); }
  std::size_t bandwidth() const noexcept { return l_.bandwidth(); }

  double log_det() const {
    double s = 0.0;
    for (std::size_t j = 0; j < l_.size(); ++j) s += std::log(l_.lower(j, j));
    return 2.0 * s;
  }

  /// y = L^{-1} x.
  std::vector<double> forward(std::span<const double> x) const {
    if (x.size() != size()) throw InvalidArgument("banded solve: size mismatch");
    std::vector<double> y(x.begin(), x.end());
    const std::size_t n = size();
    for (std::size_t j = 0; j < n; ++j) {
      const auto col = l_.column(j);
      y[j] /= col[0];
      const std::size_t len = std::min(bandwidth(), n - 1 - j);
      for (std::size_t r = 1; r <= len; ++r) y[j + r] -= col[r] * y[j];
    }
    return y;
  }

  std::vector<double> solve(std::span<const double> rhs) const {
    std::vector<double> z = forward(rhs);
    const std::size_t n = size();
    for (std::size_t jj = n; jj-- > 0;) {
      const auto col = l_.column(jj);
      const std::size_t len = std::min(bandwidth(), n - 1 - jj);
      double s = z[jj];
      for (std::size_t r = 1; r <= len; ++r) s -= col[r] * z[jj + r];
      z[jj] = s / col[0];
    }
    return z;
  }

  double quad_form(std::span<const double> x) const {
    const auto y = forward(x);
    double s = 0.0;
    for (double v : y) s += v * v;
    return s;
  }

  /// Entries of A^{-1} inside the band (Takahashi recurrences on the factor).
  BandedSpd selected_inverse() const {
    const std::size_t n = size();
    const std::size_t b = bandwidth();
    BandedSpd z(n, b);
    for (std::size_t i = n; i-- > 0;) {
      const auto li = l_.column(i);
      const double lii = li[0];
      const std::size_t len = std::min(b, n - 1 - i);
      // Off-diagonal entries Z(j, i) for j > i, farthest first.
      for (std::size_t off = len; off >= 1; --off) {
        const std::size_t j = i + off;
        double s = 0.0;
        for (std::size_t r = 1; r <= len; ++r) {
          const std::size_t k = i + r;
          s += li[r] * (k >= j ? z.lower(k, j) : z.lower(j, k));
        }
        z.lower(j, i) = -s / lii;
      }
      double s = 0.0;
      for (std::size_t r = 1; r <= len; ++r) s += li[r] * z.lower(i + r, i);
      z.lower(i, i) = (1.0 / lii - s) / lii;
    }
    return z;
  }

  const BandedSpd& factor() const noexcept { return l_; }

 private:
  BandedSpd l_;
};

/// trace(Z B) for symmetric Z and B, summing over the band of B.
inline double trace_product(const BandedSpd& z, const BandedSpd& b) {
  if (z.size() != b.size() || z.bandwidth() < b.bandwidth()) {
    throw InvalidArgument("trace_product: incompatible band matrices");
  }
  double s = 0.0;
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    s += z.lower(j, j) * b.lower(j, j);
    const std::size_t last = std::min(n - 1, j + b.bandwidth());
    for (std::size_t i = j + 1; i <= last; ++i) s += 2.0 * z.lower(i, j) * b.lower(i, j);
  }
  return s;
}

struct LogDetSolve {
  double log_det = 0.0;
  std::vector<double> solution;
};

inline LogDetSolve cholesky_logdet_solve(const DenseSpd& a, std::span<const double> rhs) {
  const DenseCholesky f(a);
  return {f.log_det(), f.solve(rhs)};
}

inline LogDetSolve cholesky_logdet_solve(const BandedSpd& a, std::span<const double> rhs) {
  const BandedCholesky f(a);
  return {f.log_det(), f.solve(rhs)};
}

inline double quad_form(const DenseCholesky& f, std::span<const double> x) { return f.quad_form(x); }
inline double quad_form(const BandedCholesky& f, std::span<const double> x) { return f.quad_form(x); }

struct DetRatio {
  double ratio = 1.0;
  bool passes = true;
};

/// exp(log det(tapered) - log det(untapered)); at least 1 for any valid taper.
inline DetRatio det_ratio_check(const Design& d, const CovModel& model, const TaperSpec& taper) {
  if (taper.is_none()) return {1.0, true};
  const double log_untapered = DenseCholesky(build_dense(d, model)).log_det();
  const double log_tapered = BandedCholesky(build_tapered(d, model, taper)).log_det();
  const double ratio = std::exp(log_tapered - log_untapered);
  return {ratio, ratio >= 1.0 - 1e-10};
}

}  // namespace taper_mle
