#pragma once

// Gamma function and modified Bessel function of the second kind.

#include <cfloat>
#include <cmath>

#include <boost/math/special_functions/bessel.hpp>

#include "taper_mle/errors.hpp"

namespace taper_mle {

/// Positive order of a modified Bessel function.
class BesselOrder {
 public:
  explicit BesselOrder(double nu) : nu_(nu) {
    if (!(nu > 0.0) || !std::isfinite(nu)) {
      throw DomainError("Bessel order must be positive and finite");
    }
  }

  double value() const noexcept { return nu_; }

 private:
  double nu_;
};

inline double gamma_fn(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("gamma_fn requires a positive finite argument");
  }
  return std::tgamma(x);
}

namespace detail {

// Beyond this argument K_nu(x) < DBL_MIN for every order used here.
inline constexpr double kBesselUnderflowArg = 745.0;

// K_nu(x) for any real order; K_{-nu} = K_nu.
inline double bessel_k_unchecked(double nu, double x) {
  if (x > kBesselUnderflowArg) return 0.0;
  const double k = boost::math::cyl_bessel_k(std::fabs(nu), x);
  return k < DBL_MIN ? 0.0 : k;
}

}  // namespace detail

/// K_nu(x). Results that would fall below the smallest normal double are
/// reported as exactly 0.
inline double bessel_k(BesselOrder nu, double x) {
  if (!(x > 0.0) || std::isnan(x)) {
    throw DomainError("bessel_k requires x > 0");
  }
  if (std::isinf(x)) return 0.0;
  return detail::bessel_k_unchecked(nu.value(), x);
}

}  // namespace taper_mle
