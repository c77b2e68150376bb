#pragma once

// Stationary covariance models on the line and compactly supported tapers.

#include <cmath>
#include <string>
#include <string_view>

#include "taper_mle/errors.hpp"
#include "taper_mle/special.hpp"

namespace taper_mle {

enum class CovFamily { Exponential, Matern };

/// Isotropic covariance: variance sigma2, inverse range theta, smoothness nu.
/// The exponential family always carries nu = 1/2.
struct CovModel {
  CovFamily family = CovFamily::Exponential;
  double sigma2 = 1.0;
  double theta = 1.0;
  double nu = 0.5;

  static CovModel exponential(double sigma2, double theta) {
    CovModel m{CovFamily::Exponential, sigma2, theta, 0.5};
    m.validate();
    return m;
  }

  static CovModel matern(double sigma2, double theta, double nu) {
    CovModel m{CovFamily::Matern, sigma2, theta, nu};
    m.validate();
    return m;
  }

  void validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(sigma2)) throw InvalidArgument("sigma2 must be positive and finite");
    if (!positive(theta)) throw InvalidArgument("theta must be positive and finite");
    if (!positive(nu)) throw InvalidArgument("nu must be positive and finite");
    if (family == CovFamily::Exponential && nu != 0.5) {
      throw InvalidArgument("exponential family requires nu = 1/2");
    }
  }

  /// sigma2 * theta^(2 nu), the consistently estimable combination.
  double microergodic() const { return sigma2 * std::pow(theta, 2.0 * nu); }

  CovModel with_sigma2(double s2) const {
    CovModel m = *this;
    m.sigma2 = s2;
    m.validate();
    return m;
  }

  CovModel with_theta(double th) const {
    CovModel m = *this;
    m.theta = th;
    m.validate();
    return m;
  }

  friend bool operator==(const CovModel&, const CovModel&) = default;
};

enum class TaperFamily { None, WendlandOne, WendlandTwo };

/// Compactly supported correlation multiplying the covariance. Zero for h >= gamma.
struct TaperSpec {
  TaperFamily family = TaperFamily::None;
  double gamma = 1.0;

  static TaperSpec none() { return {TaperFamily::None, 1.0}; }

  static TaperSpec wendland1(double gamma) {
    TaperSpec t{TaperFamily::WendlandOne, gamma};
    t.validate();
    return t;
  }

  static TaperSpec wendland2(double gamma) {
    TaperSpec t{TaperFamily::WendlandTwo, gamma};
    t.validate();
    return t;
  }

  bool is_none() const noexcept { return family == TaperFamily::None; }

  /// Lags at or beyond this value have zero tapered covariance.
  double support() const noexcept { return is_none() ? INFINITY : gamma; }

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw InvalidArgument("taper gamma must be positive and finite");
    }
  }

  friend bool operator==(const TaperSpec&, const TaperSpec&) = default;
};

// ---------------------------------------------------------------------------
// Names used by the config and JSON layers.

inline std::string to_string(CovFamily f) {
  return f == CovFamily::Exponential ? "exponential" : "matern";
}

inline std::string to_string(TaperFamily f) {
  switch (f) {
    case TaperFamily::WendlandOne: return "wendland1";
    case TaperFamily::WendlandTwo: return "wendland2";
    case TaperFamily::None: break;
  }
  return "none";
}

inline CovFamily parse_cov_family(std::string_view s) {
  if (s == "exponential") return CovFamily::Exponential;
  if (s == "matern") return CovFamily::Matern;
  throw InvalidArgument("unknown covariance family '" + std::string(s) + "'");
}

inline TaperFamily parse_taper_family(std::string_view s) {
  if (s == "none") return TaperFamily::None;
  if (s == "wendland1") return TaperFamily::WendlandOne;
  if (s == "wendland2") return TaperFamily::WendlandTwo;
  throw InvalidArgument("unknown taper family '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

/// Covariance as a function of lag with the normalizing constants evaluated once.
class CovarianceFunction {
 public:
  explicit CovarianceFunction(const CovModel& model) : model_(model) {
    model_.validate();
    if (model_.family == CovFamily::Matern) {
      scale_ = model_.sigma2 / (gamma_fn(model_.nu) * std::pow(2.0, model_.nu - 1.0));
    }
  }

  const CovModel& model() const noexcept { return model_; }

  double operator()(double h) const {
    if (h == 0.0) return model_.sigma2;
    const double x = model_.theta * h;
    if (model_.family == CovFamily::Exponential) return model_.sigma2 * std::exp(-x);
    if (x < 1e-300) return model_.sigma2;
    return scale_ * std::pow(x, model_.nu) * detail::bessel_k_unchecked(model_.nu, x);
  }

  /// d/dtheta of the covariance at lag h. Uses d/dx[x^nu K_nu(x)] = -x^nu K_{nu-1}(x).
  double dtheta(double h) const {
    if (h == 0.0) return 0.0;
    const double x = model_.theta * h;
    if (model_.family == CovFamily::Exponential) return -model_.sigma2 * h * std::exp(-x);
    if (x < 1e-300) return 0.0;
    return -scale_ * h * std::pow(x, model_.nu) * detail::bessel_k_unchecked(model_.nu - 1.0, x);
  }

 private:
  CovModel model_;
  double scale_ = 0.0;
};

inline double cov(const CovModel& model, double h) {
  if (!(h >= 0.0)) throw DomainError("lag must be nonnegative");
  return CovarianceFunction(model)(h);
}

inline double taper_value(const TaperSpec& taper, double h) {
  if (!(h >= 0.0)) throw DomainError("lag must be nonnegative");
  if (taper.is_none()) return 1.0;
  if (h >= taper.gamma) return 0.0;
  const double u = h / taper.gamma;
  const double r = 1.0 - u;
  if (taper.family == TaperFamily::WendlandOne) {
    const double r2 = r * r;
    return r2 * r2 * (1.0 + 4.0 * u);
  }
  const double r3 = r * r * r;
  return r3 * r3 * (1.0 + 6.0 * u + 35.0 * u * u / 3.0);
}

/// d/dh of the taper.
inline double taper_derivative(const TaperSpec& taper, double h) {
  if (taper.is_none() || h >= taper.gamma) return 0.0;
  const double u = h / taper.gamma;
  const double r = 1.0 - u;
  if (taper.family == TaperFamily::WendlandOne) {
    return -20.0 / (taper.gamma * taper.gamma) * h * r * r * r;
  }
  const double r5 = r * r * r * r * r;
  return -56.0 / (3.0 * taper.gamma * taper.gamma) * h * r5 * (1.0 + 5.0 * u);
}

inline double tapered_cov(const CovModel& model, const TaperSpec& taper, double h) {
  const double t = taper_value(taper, h);
  if (t == 0.0) return 0.0;
  return cov(model, h) * t;
}

/// The constant c in K_tap'(h) = c h + o(h) near the origin.
inline double check_a2_slope(const TaperSpec& taper) {
  taper.validate();
  const double g2 = taper.gamma * taper.gamma;
  switch (taper.family) {
    case TaperFamily::WendlandOne: return -20.0 / g2;
    case TaperFamily::WendlandTwo: return -56.0 / (3.0 * g2);
    case TaperFamily::None: break;
  }
  throw InvalidArgument("check_a2_slope requires a Wendland taper");
}

}  // namespace taper_mle
