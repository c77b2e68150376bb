#pragma once

// Spectral densities under the convention K(h) = \int e^{i lambda h} f(lambda) dlambda,
// so that \int f = K(0). For a taper supported on [0, gamma] this is the cosine
// transform f(lambda) = (1/pi) \int_0^gamma K(h) cos(lambda h) dh, which is
// evaluated exactly for the Wendland polynomials.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "taper_mle/covmodel.hpp"
#include "taper_mle/errors.hpp"
#include "taper_mle/special.hpp"

namespace taper_mle {

namespace detail {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Gauss-Kronrod on [a, b], bisecting until the Kronrod/Gauss difference is
// below abs_tol or at the roundoff floor of the panel.
template <class F>
double adaptive_gk(F& f, double a, double b, double abs_tol, int depth, double* err_out) {
  using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  double err = 0.0;
  double l1 = 0.0;
  const double v = Quad::integrate(f, a, b, 0, 0.0, &err, &l1);
  // boost reports the single-panel estimate on the [-1, 1] reference interval.
  err *= 0.5 * (b - a);
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * l1;
  if (err <= std::max(abs_tol, floor) || depth == 0) {
    *err_out += err;
    return v;
  }
  const double mid = 0.5 * (a + b);
  return adaptive_gk(f, a, mid, 0.5 * abs_tol, depth - 1, err_out) +
         adaptive_gk(f, mid, b, 0.5 * abs_tol, depth - 1, err_out);
}

// Adaptive Gauss-Kronrod over consecutive panels [breaks[k], breaks[k+1]].
// Each panel receives a share of abs_tol proportional to its length.
template <class F>
double integrate_panels(F&& f, std::span<const double> breaks, double abs_tol, double* abs_error) {
  CompensatedSum total;
  double err_total = 0.0;
  const double length = breaks.back() - breaks.front();
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k];
    const double b = breaks[k + 1];
    if (!(b > a)) continue;
    total.add(adaptive_gk(f, a, b, abs_tol * (b - a) / length, 20, &err_total));
  }
  if (abs_error != nullptr) *abs_error = err_total;
  return total.value();
}

}  // namespace detail

/// Closed-form Matern spectral density scaled so that it integrates to sigma2.
class SpectralDensity {
 public:
  explicit SpectralDensity(const CovModel& model) : model_(model) {
    model_.validate();
    c_ = gamma_fn(model_.nu + 0.5) / (gamma_fn(model_.nu) * std::sqrt(std::numbers::pi));
  }

  double operator()(double lambda) const {
    const double th2 = model_.theta * model_.theta;
    return model_.sigma2 * c_ * std::pow(model_.theta, 2.0 * model_.nu) /
           std::pow(th2 + lambda * lambda, model_.nu + 0.5);
  }

  /// Gamma(nu + 1/2) / (Gamma(nu) sqrt(pi)).
  double constant() const noexcept { return c_; }

  /// Total mass of the density.
  double normalization() const noexcept { return model_.sigma2; }

  const CovModel& model() const noexcept { return model_; }

 private:
  CovModel model_;
  double c_ = 0.0;
};

inline SpectralDensity matern_spectral(const CovModel& model) { return SpectralDensity(model); }

namespace detail {

// A Wendland taper on u = h / gamma in [0, 1], expanded both in u and in
// v = 1 - u so that derivatives at either end come out exactly.
struct WendlandPolynomial {
  std::span<const double> in_u;
  std::span<const double> in_v;
};

inline WendlandPolynomial wendland_polynomial(TaperFamily family) {
  static constexpr double w1_u[] = {1.0, 0.0, -10.0, 20.0, -15.0, 4.0};
  static constexpr double w1_v[] = {0.0, 0.0, 0.0, 0.0, 5.0, -4.0};
  static constexpr double w2_u[] = {1.0, 0.0, -28.0 / 3.0, 0.0, 70.0, -448.0 / 3.0, 140.0, -64.0, 35.0 / 3.0};
  static constexpr double w2_v[] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 56.0 / 3.0, -88.0 / 3.0, 35.0 / 3.0};
  if (family == TaperFamily::WendlandOne) return {w1_u, w1_v};
  if (family == TaperFamily::WendlandTwo) return {w2_u, w2_v};
  throw InvalidArgument("no polynomial form for the identity taper");
}

// Below this value of s the power series is used; above it, integration by parts.
inline constexpr double kSeriesSwitch = 8.0;

// \int_0^1 p(u) cos(s u) du.
inline double polynomial_cosine_integral(const WendlandPolynomial& p, double s) {
  s = std::fabs(s);
  if (s < kSeriesSwitch) {
    // sum_j (-1)^j s^{2j} / (2j)! * \int_0^1 p(u) u^{2j} du
    CompensatedSum total;
    double factor = 1.0;
    for (int j = 0; j < 200; ++j) {
      double moment = 0.0;
      for (std::size_t k = 0; k < p.in_u.size(); ++k) moment += p.in_u[k] / static_cast<double>(k + 2 * j + 1);
      const double term = factor * moment;
      total.add(term);
      if (j > 2 && std::fabs(term) < 1e-18 * std::fabs(total.value())) break;
      factor *= -s * s / static_cast<double>((2 * j + 1) * (2 * j + 2));
    }
    return total.value();
  }
  // Repeated integration by parts with D_m the m-th derivative of p:
  //   \int D_m cos = [D_m sin / s] - (1/s) \int D_{m+1} sin,
  //   \int D_m sin = [-D_m cos / s] + (1/s) \int D_{m+1} cos.
  // D_m(0) = m! a_m and D_m(1) = (-1)^m m! c_m from the two expansions.
  const double sin1 = std::sin(s), cos1 = std::cos(s);
  CompensatedSum total;
  double scale = 1.0 / s;
  double m_factorial = 1.0;
  for (std::size_t m = 0; m < p.in_u.size(); ++m) {
    if (m > 0) m_factorial *= static_cast<double>(m);
    const double at0 = m_factorial * p.in_u[m];
    const double at1 = (m % 2 == 0 ? 1.0 : -1.0) * m_factorial * p.in_v[m];
    double term = 0.0;
    switch (m % 4) {
      case 0: term = at1 * sin1; break;
      case 1: term = at1 * cos1 - at0; break;
      case 2: term = -at1 * sin1; break;
      default: term = -(at1 * cos1 - at0); break;
    }
    total.add(scale * term);
    scale /= s;
  }
  return total.value();
}

}  // namespace detail

inline double taper_spectral_at(const TaperSpec& taper, double lambda) {
  if (taper.is_none()) throw InvalidArgument("the identity taper has no integrable spectral density");
  taper.validate();
  if (!std::isfinite(lambda)) throw InvalidArgument("lambda must be finite");
  const auto p = detail::wendland_polynomial(taper.family);
  return taper.gamma / std::numbers::pi * detail::polynomial_cosine_integral(p, lambda * taper.gamma);
}

inline std::vector<double> taper_spectral(const TaperSpec& taper, std::span<const double> lambda_grid) {
  std::vector<double> out;
  out.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    if (!std::isfinite(lambda)) throw InvalidArgument("lambda grid must be finite");
    out.push_back(taper_spectral_at(taper, lambda));
  }
  return out;
}

/// Least-squares line through (log x, log |y|). Returns {slope, intercept}.
struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(std::fabs(y[i]) > 0.0)) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(std::fabs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 2) throw InvalidArgument("power-law fit needs at least two usable points");
  const double md = static_cast<double>(m);
  const double denom = md * sxx - sx * sx;
  if (!(std::fabs(denom) > 0.0)) throw InvalidArgument("power-law fit on a degenerate grid");
  PowerLawFit fit;
  fit.slope = (md * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / md;
  return fit;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = lo * std::pow(hi / lo, f);
  }
  return out;
}

struct A3Report {
  bool satisfied = false;
  double fitted_epsilon = 0.0;
  double fitted_M = 0.0;
  double decay_exponent = 0.0;  // p in f_tap ~ lambda^-p
  double threshold = 0.0;       // max{1/2, 1 - nu}
};

// Fitted exponents within this distance of the threshold are not counted as
// exceeding it; the log-log fit carries O(1/lambda) oscillating corrections.
inline constexpr double kA3Margin = 0.05;

/// Empirical check of f_tap(lambda) <= M / (1 + lambda^2)^(nu + 1/2 + eps)
/// with eps > max{1/2, 1 - nu}.
inline A3Report check_a3(const TaperSpec& taper, double nu, double lambda_max) {
  if (!(lambda_max > 10.0)) throw InvalidArgument("check_a3 requires lambda_max > 10");
  if (!(nu > 0.0)) throw InvalidArgument("check_a3 requires nu > 0");
  const double lo = std::min(100.0, lambda_max / 10.0);
  const auto grid = log_spaced(lo, lambda_max, 48);
  const auto values = taper_spectral(taper, grid);
  for (double v : values) {
    if (!(v > 0.0)) throw QuadratureError("taper spectral density not positive on the fit grid");
  }
  const PowerLawFit fit = fit_power_law(grid, values);

  A3Report rep;
  rep.decay_exponent = -fit.slope;
  rep.fitted_epsilon = rep.decay_exponent / 2.0 - nu - 0.5;
  rep.threshold = std::max(0.5, 1.0 - nu);
  rep.satisfied = rep.fitted_epsilon > rep.threshold + kA3Margin;

  // Smallest M that bounds the computed density on [0, lambda_max].
  std::vector<double> m_grid = log_spaced(1e-3, lambda_max, 96);
  m_grid.insert(m_grid.begin(), 0.0);
  const double power = nu + 0.5 + rep.fitted_epsilon;
  for (double lambda : m_grid) {
    const double f = taper_spectral_at(taper, lambda);
    rep.fitted_M = std::max(rep.fitted_M, f * std::pow(1.0 + lambda * lambda, power));
  }
  return rep;
}

/// (f~(lambda) - f(lambda)) / f(lambda) where f~ is the spectral density of the
/// tapered covariance, obtained by convolving f with f_tap. Uses the symmetric
/// form \int_0^U [f(lambda-u) + f(lambda+u) - 2 f(lambda)] / f(lambda) f_tap(u) du;
/// the truncation at U leaves an error below the taper mass beyond U.
inline double lemma4_ratio_at(const CovModel& model, const TaperSpec& taper, double lambda) {
  if (taper.is_none()) return 0.0;
  taper.validate();
  const SpectralDensity f(model.with_sigma2(1.0));
  const double lam = std::fabs(lambda);
  const double f_lam = f(lam);
  // Taper mass beyond U is below ~1e-10 for both Wendland tails.
  const double reach = taper.family == TaperFamily::WendlandOne ? 4000.0 : 400.0;
  const double upper = 2.0 * lam + reach / taper.gamma;

  std::vector<double> breaks{0.0, upper};
  for (double s = 0.25 / taper.gamma; s < upper; s *= 2.0) breaks.push_back(s);
  for (double s = 0.125 * model.theta; s < upper; s *= 2.0) {
    if (lam - s > 0.0) breaks.push_back(lam - s);
    breaks.push_back(lam + s);
  }
  breaks.push_back(lam);
  std::erase_if(breaks, [&](double b) { return b < 0.0 || b > upper; });
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  auto integrand = [&](double u) {
    const double second_diff = (f(lam - u) + f(lam + u) - 2.0 * f_lam) / f_lam;
    return second_diff * taper_spectral_at(taper, u);
  };
  double err = 0.0;
  const double value = detail::integrate_panels(integrand, breaks, 1e-11, &err);
  if (!std::isfinite(value) || !(err <= 1e-9)) {
    throw QuadratureError("spectral convolution did not converge at lambda = " + std::to_string(lambda));
  }
  return value;
}

inline std::vector<double> lemma4_ratio(const CovModel& model, const TaperSpec& taper,
                                        std::span<const double> lambda_grid) {
  std::vector<double> out;
  out.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) out.push_back(lemma4_ratio_at(model, taper, lambda));
  return out;
}

/// Fitted r in |ratio| ~ lambda^-r.
inline double fit_decay_exponent(std::span<const double> lambda_grid, std::span<const double> values) {
  return -fit_power_law(lambda_grid, values).slope;
}

}  // namespace taper_mle
