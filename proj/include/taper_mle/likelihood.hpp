#pragma once

// Exact and tapered Gaussian log-likelihoods, their scores, closed-form variance
// estimators at a fixed range, and the profile maximizer for the exponential model.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "taper_mle/covmodel.hpp"
#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"
#include "taper_mle/linalg.hpp"
#include "taper_mle/ou_precision.hpp"

namespace taper_mle {

enum class SolverPath {
  Auto,    // OU precision for untapered exponential, dense for other untapered, banded when tapered
  Dense,   // dense Cholesky of the (possibly tapered) matrix
  Banded,  // banded Cholesky; requires a taper
};

/// One factorized covariance matrix on a design, by whichever route applies.
class CovFactor {
 public:
  CovFactor(const Design& design, const CovModel& model, const TaperSpec& taper = TaperSpec::none(),
            SolverPath path = SolverPath::Auto)
      : design_(design), model_(validated(model)), taper_(taper), impl_(factorize(design_, model_, taper_, path)) {}

  std::size_t size() const noexcept { return design_.size(); }
  const CovModel& model() const noexcept { return model_; }
  const TaperSpec& taper() const noexcept { return taper_; }

  bool is_ou() const noexcept { return std::holds_alternative<OuPrecision>(impl_); }
  bool is_banded() const noexcept { return std::holds_alternative<BandedCholesky>(impl_); }

  double log_det() const {
    return std::visit(
        [](const auto& f) {
          if constexpr (std::is_same_v<std::decay_t<decltype(f)>, OuPrecision>) {
            return f.log_det_covariance();
          } else {
            return f.log_det();
          }
        },
        impl_);
  }

  double quad_form(std::span<const double> x) const {
    check(x);
    return std::visit([&](const auto& f) { return f.quad_form(x); }, impl_);
  }

  /// V^{-1} x.
  std::vector<double> solve(std::span<const double> x) const {
    check(x);
    return std::visit(
        [&](const auto& f) {
          if constexpr (std::is_same_v<std::decay_t<decltype(f)>, OuPrecision>) {
            return f.apply(x);
          } else {
            return f.solve(x);
          }
        },
        impl_);
  }

  /// -n/2 log 2 pi - 1/2 log det V - 1/2 x' V^{-1} x.
  double loglik(std::span<const double> x) const {
    const double n = static_cast<double>(size());
    return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * log_det() - 0.5 * quad_form(x);
  }

  /// d/dtheta of loglik: -1/2 tr(V^{-1} dV) + 1/2 y' dV y with y = V^{-1} x,
  /// where dV is the theta-derivative of the (tapered) covariance matrix.
  double theta_score(std::span<const double> x) const { return -0.5 * theta_trace() + 0.5 * theta_form(x); }

  /// tr(V^{-1} dV), which does not depend on the data.
  double theta_trace() const {
    if (const auto* ou = std::get_if<OuPrecision>(&impl_)) {
      double tr = 0.0;
      for (std::size_t i = 1; i < size(); ++i) {
        const double g = design_.gap(i);
        tr += 2.0 * ou->precision(i, i - 1) * (-model_.sigma2 * g * std::exp(-model_.theta * g));
      }
      return tr;
    }
    if (const auto* dense = std::get_if<DenseCholesky>(&impl_)) {
      return dense->inverse().cwiseProduct(dense_dtheta().matrix()).sum();
    }
    const auto& banded = std::get<BandedCholesky>(impl_);
    return trace_product(banded.selected_inverse(), build_tapered_dtheta(design_, model_, taper_));
  }

  /// y' dV y with y = V^{-1} x.
  double theta_form(std::span<const double> x) const {
    const std::vector<double> y = solve(x);
    if (is_ou()) return ou_form(y);
    if (std::holds_alternative<DenseCholesky>(impl_)) {
      const DenseSpd dv = dense_dtheta();
      const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
      return yv.dot(dv.matrix() * yv);
    }
    const auto dvy = build_tapered_dtheta(design_, model_, taper_).multiply(y);
    double form = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) form += y[i] * dvy[i];
    return form;
  }

 private:
  using Impl = std::variant<OuPrecision, DenseCholesky, BandedCholesky>;

  static CovModel validated(const CovModel& m) {
    m.validate();
    return m;
  }

  static Impl factorize(const Design& design, const CovModel& model, const TaperSpec& taper, SolverPath path) {
    if (!taper.is_none()) taper.validate();
    detail::check_separation(design);
    if (path == SolverPath::Auto) {
      if (!taper.is_none()) {
        path = SolverPath::Banded;
      } else if (model.family == CovFamily::Exponential && design.size() >= 2) {
        return Impl(std::in_place_type<OuPrecision>, ou_precision(design, model.theta, model.sigma2));
      } else {
        path = SolverPath::Dense;
      }
    }
    if (path == SolverPath::Banded) {
      if (taper.is_none()) throw InvalidArgument("the banded path needs a taper");
      return Impl(std::in_place_type<BandedCholesky>, build_tapered(design, model, taper));
    }
    return Impl(std::in_place_type<DenseCholesky>, build_dense_tapered(design, model, taper));
  }

  void check(std::span<const double> x) const {
    if (x.size() != size()) throw InvalidArgument("data length does not match the design");
  }

  DenseSpd dense_dtheta() const {
    const CovarianceFunction k(model_);
    return dense_from_lags(design_, [&](double h) {
      const double t = taper_value(taper_, h);
      return t == 0.0 ? 0.0 : k.dtheta(h) * t;
    });
  }

  // y' dV y = -2 sigma2 sum_i y_i sum_{j<i} y_j (t_i - t_j) e^{-theta (t_i - t_j)},
  // accumulated by a forward recursion in O(n).
  double ou_form(std::span<const double> y) const {
    double acc_a = 0.0;  // sum_{j<i} y_j e^{-theta (t_i - t_j)}
    double acc_c = 0.0;  // sum_{j<i} y_j (t_i - t_j) e^{-theta (t_i - t_j)}
    double cross = 0.0;
    for (std::size_t i = 1; i < size(); ++i) {
      const double g = design_.gap(i);
      const double e = std::exp(-model_.theta * g);
      acc_c = e * (acc_c + g * (acc_a + y[i - 1]));
      acc_a = e * (acc_a + y[i - 1]);
      cross += y[i] * acc_c;
    }
    return -2.0 * model_.sigma2 * cross;
  }

  Design design_;
  CovModel model_;
  TaperSpec taper_;
  Impl impl_;
};

// ---------------------------------------------------------------------------
// Log-likelihoods

/// A log-likelihood value; a failed factorization gives -inf with valid = false.
struct LogLik {
  double value = -std::numeric_limits<double>::infinity();
  bool valid = false;
  std::optional<std::size_t> failed_pivot;

  explicit operator double() const noexcept { return value; }
};

namespace detail {

inline LogLik guarded_loglik(const Dataset& data, const CovModel& model, const TaperSpec& taper, SolverPath path) {
  try {
    const CovFactor f(data.design, model, taper, path);
    const double v = f.loglik(data.x);
    if (!std::isfinite(v)) return {};
    return {v, true, std::nullopt};
  } catch (const FactorizationError& e) {
    return {-std::numeric_limits<double>::infinity(), false, e.pivot()};
  }
}

}  // namespace detail

inline LogLik exact_loglik(const Dataset& data, const CovModel& model, SolverPath path = SolverPath::Auto) {
  if (path == SolverPath::Banded) throw InvalidArgument("the exact likelihood has no banded path");
  return detail::guarded_loglik(data, model, TaperSpec::none(), path);
}

inline LogLik tapered_loglik(const Dataset& data, const CovModel& model, const TaperSpec& taper,
                             SolverPath path = SolverPath::Auto) {
  if (taper.is_none()) return exact_loglik(data, model, path == SolverPath::Banded ? SolverPath::Auto : path);
  return detail::guarded_loglik(data, model, taper, path);
}

inline double dloglik_dtheta(const Dataset& data, const CovModel& model, SolverPath path = SolverPath::Auto) {
  if (data.size() == 1) return 0.0;
  return CovFactor(data.design, model, TaperSpec::none(), path).theta_score(data.x);
}

inline double tapered_dloglik_dtheta(const Dataset& data, const CovModel& model, const TaperSpec& taper,
                                     SolverPath path = SolverPath::Auto) {
  if (taper.is_none()) return dloglik_dtheta(data, model, path == SolverPath::Banded ? SolverPath::Auto : path);
  if (data.size() == 1) return 0.0;
  return CovFactor(data.design, model, taper, path).theta_score(data.x);
}

namespace detail {

inline double sigma2_score(std::size_t n, double sigma2, double corr_quad) {
  return -static_cast<double>(n) / (2.0 * sigma2) + corr_quad / (2.0 * sigma2 * sigma2);
}

}  // namespace detail

/// -n/(2 sigma2) + x' R^{-1} x / (2 sigma2^2), R the correlation matrix.
inline double dloglik_dsigma2(const Dataset& data, const CovModel& model) {
  const CovFactor r(data.design, model.with_sigma2(1.0));
  return detail::sigma2_score(data.size(), model.sigma2, r.quad_form(data.x));
}

inline double tapered_dloglik_dsigma2(const Dataset& data, const CovModel& model, const TaperSpec& taper) {
  const CovFactor r(data.design, model.with_sigma2(1.0), taper);
  return detail::sigma2_score(data.size(), model.sigma2, r.quad_form(data.x));
}

// ---------------------------------------------------------------------------
// Estimators

struct FitResult {
  double theta_hat = 0.0;
  double sigma2_hat = 0.0;
  double microergodic = 0.0;
  double loglik = -std::numeric_limits<double>::infinity();
  bool tapered = false;
  std::size_t n = 0;
  bool converged = false;
  std::size_t evaluations = 0;
  double nu = 0.5;
};

namespace detail {

inline CovModel unit_model(double theta, double nu) {
  return nu == 0.5 ? CovModel::exponential(1.0, theta) : CovModel::matern(1.0, theta, nu);
}

// Profile log-likelihood at variance s2 given log det R and x'R^{-1}x.
inline double profile_loglik(std::size_t n, double s2, double log_det_r, double quad_r) {
  const double nd = static_cast<double>(n);
  return -0.5 * nd * std::log(2.0 * std::numbers::pi) - 0.5 * (nd * std::log(s2) + log_det_r) - 0.5 * quad_r / s2;
}

inline void finish(FitResult& r) { r.microergodic = r.sigma2_hat * std::pow(r.theta_hat, 2.0 * r.nu); }

}  // namespace detail

/// sigma2_hat = x' R^{-1} x / n at a fixed range theta1, with R factorized once
/// so that many datasets on the same design reuse it.
class FixedThetaEstimator {
 public:
  FixedThetaEstimator(const Design& design, double theta1, double nu, const TaperSpec& taper)
      : design_(design),
        theta1_(theta1),
        nu_(nu),
        tapered_(!taper.is_none()),
        factor_(design_, detail::unit_model(theta1, nu), taper),
        log_det_(factor_.log_det()) {}

  FitResult fit(std::span<const double> x) const {
    FitResult r;
    r.theta_hat = theta1_;
    r.nu = nu_;
    r.n = design_.size();
    r.tapered = tapered_;
    const double q = factor_.quad_form(x);
    r.sigma2_hat = q / static_cast<double>(r.n);
    r.loglik = detail::profile_loglik(r.n, r.sigma2_hat, log_det_, q);
    r.evaluations = 1;
    r.converged = std::isfinite(r.loglik) && r.sigma2_hat > 0.0;
    detail::finish(r);
    return r;
  }

 private:
  Design design_;
  double theta1_;
  double nu_;
  bool tapered_;
  CovFactor factor_;
  double log_det_;
};

/// Closed-form variance estimate at fixed theta1; nu = 1/2 selects the exponential family.
inline FitResult sigma2_mle_fixed_theta(const Dataset& data, double theta1, double nu, const TaperSpec& taper) {
  if (!(theta1 > 0.0) || !std::isfinite(theta1)) throw InvalidArgument("theta1 must be positive and finite");
  return FixedThetaEstimator(data.design, theta1, nu, taper).fit(data.x);
}

/// Rectangle [a, b] x [w, v] of admissible (theta, sigma2).
struct ParamBox {
  double a = 0.25;
  double b = 4.0;
  double w = 0.25;
  double v = 4.0;

  void validate() const {
    auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!positive(a) || !positive(b) || !positive(w) || !positive(v)) {
      throw InvalidArgument("box bounds must be positive and finite");
    }
    if (a > b) throw InvalidArgument("box requires a <= b");
    if (w > v) throw InvalidArgument("box requires w <= v");
  }

  double clamp_sigma2(double s2) const { return std::clamp(s2, w, v); }
};

/// Joint (theta, sigma2) maximizer of the exponential likelihood over a box.
/// The variance is profiled out in closed form (then clamped to the box); the
/// range is located on a log-spaced grid and refined by golden-section search
/// in log theta. Grid factorizations are kept so repeated fits on one design
/// only pay for the refinement.
class ExponentialProfileMle {
 public:
  static constexpr std::size_t kGridSize = 64;
  static constexpr double kLogThetaTol = 1e-9;

  ExponentialProfileMle(const Design& design, const ParamBox& box, const TaperSpec& taper)
      : design_(design), box_(box), taper_(taper) {
    box_.validate();
    const std::size_t count = box_.a == box_.b ? 1 : kGridSize;
    grid_ = count == 1 ? std::vector<double>{box_.a} : log_spaced_grid(box_.a, box_.b, count);
    cache_.reserve(grid_.size());
    for (double th : grid_) {
      try {
        auto f = std::make_unique<CovFactor>(design_, CovModel::exponential(1.0, th), taper_);
        const double ld = f->log_det();
        cache_.push_back({std::move(f), ld});
      } catch (const FactorizationError&) {
        cache_.push_back({nullptr, 0.0});
      }
    }
  }

  const std::vector<double>& grid() const noexcept { return grid_; }

  FitResult fit(std::span<const double> x) const {
    if (x.size() != design_.size()) throw InvalidArgument("data length does not match the design");
    FitResult best;
    best.nu = 0.5;
    best.n = design_.size();
    best.tapered = !taper_.is_none();
    std::size_t evals = 0;

    std::size_t best_k = grid_.size();
    double best_val = -std::numeric_limits<double>::infinity();
    double best_s2 = 0.0;
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      if (!cache_[k].factor) continue;
      ++evals;
      const double q = cache_[k].factor->quad_form(x);
      const double s2 = box_.clamp_sigma2(q / static_cast<double>(best.n));
      const double val = detail::profile_loglik(best.n, s2, cache_[k].log_det, q);
      if (val > best_val) {
        best_val = val;
        best_k = k;
        best_s2 = s2;
      }
    }
    if (best_k == grid_.size()) {
      best.evaluations = evals;
      best.converged = false;
      return best;
    }
    double best_theta = grid_[best_k];

    if (grid_.size() > 1) {
      const double lo = std::log(grid_[best_k == 0 ? 0 : best_k - 1]);
      const double hi = std::log(grid_[std::min(best_k + 1, grid_.size() - 1)]);
      auto profile = [&](double log_theta, double& s2_out) {
        ++evals;
        return profile_at(std::exp(log_theta), x, s2_out);
      };
      const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
      double a = lo, b = hi;
      double c = b - phi * (b - a), d = a + phi * (b - a);
      double sc = 0.0, sd = 0.0;
      double fc = profile(c, sc), fd = profile(d, sd);
      while (b - a > kLogThetaTol) {
        if (fc >= fd) {
          b = d;
          d = c;
          fd = fc;
          sd = sc;
          c = b - phi * (b - a);
          fc = profile(c, sc);
        } else {
          a = c;
          c = d;
          fc = fd;
          sc = sd;
          d = a + phi * (b - a);
          fd = profile(d, sd);
        }
      }
      const bool take_c = fc >= fd;
      const double f_ref = take_c ? fc : fd;
      if (f_ref > best_val) {
        best_val = f_ref;
        best_theta = std::clamp(std::exp(take_c ? c : d), box_.a, box_.b);
        best_s2 = take_c ? sc : sd;
      }
    }

    best.theta_hat = best_theta;
    best.sigma2_hat = best_s2;
    best.loglik = best_val;
    best.evaluations = evals;
    best.converged = std::isfinite(best_val);
    detail::finish(best);
    return best;
  }

 private:
  struct Cached {
    std::unique_ptr<CovFactor> factor;
    double log_det;
  };

  static std::vector<double> log_spaced_grid(double lo, double hi, std::size_t count) {
    std::vector<double> g(count);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t i = 0; i < count; ++i) {
      g[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    g.front() = lo;
    g.back() = hi;
    return g;
  }

  double profile_at(double theta, std::span<const double> x, double& s2_out) const {
    try {
      const CovFactor f(design_, CovModel::exponential(1.0, theta), taper_);
      const double q = f.quad_form(x);
      s2_out = box_.clamp_sigma2(q / static_cast<double>(design_.size()));
      return detail::profile_loglik(design_.size(), s2_out, f.log_det(), q);
    } catch (const FactorizationError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  Design design_;
  ParamBox box_;
  TaperSpec taper_;
  std::vector<double> grid_;
  std::vector<Cached> cache_;
};

inline FitResult joint_mle_exponential(const Dataset& data, const ParamBox& box, const TaperSpec& taper) {
  return ExponentialProfileMle(data.design, box, taper).fit(data.x);
}

}  // namespace taper_mle
