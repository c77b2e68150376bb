#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "taper_mle/spectral.hpp"

using namespace taper_mle;

namespace {

// Composite Simpson rule with m (even) subintervals.
template <class F>
double simpson(F&& f, double a, double b, int m) {
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4 : 2) * f(a + i * h);
  return s * h / 3;
}

}  // namespace

TEST(MaternSpectral, NormalizingConstant) {
  EXPECT_NEAR(matern_spectral(CovModel::exponential(1, 1)).constant(), 1 / std::numbers::pi, 1e-15);
  EXPECT_NEAR(matern_spectral(CovModel::exponential(1, 1)).constant(), 0.3183099, 1e-7);
  // Gamma(2) / (Gamma(1.5) sqrt(pi)) = 2 / pi.
  EXPECT_NEAR(matern_spectral(CovModel::matern(1, 1, 1.5)).constant(), 2 / std::numbers::pi, 1e-14);
}

TEST(MaternSpectral, ValueAtZeroAndSymmetry) {
  for (const auto& m : {CovModel::exponential(2, 3), CovModel::matern(1.5, 0.7, 1.0)}) {
    const SpectralDensity f(m);
    EXPECT_NEAR(f(0.0), m.sigma2 * f.constant() / std::pow(m.theta, 1.0), 1e-14 * f(0.0));
    for (double l : {0.1, 2.0, 40.0}) EXPECT_EQ(f(l), f(-l));
    EXPECT_EQ(f.normalization(), m.sigma2);
  }
}

TEST(MaternSpectral, IntegratesToVariance) {
  // lambda = theta tan(phi) maps the real line to (-pi/2, pi/2), where the
  // integrand becomes sigma2 c cos(phi)^(2 nu - 1).
  for (const auto& m : {CovModel::exponential(1.0, 1.0), CovModel::matern(2.0, 3.0, 1.0),
                        CovModel::matern(0.7, 0.4, 1.5), CovModel::matern(1.0, 2.0, 2.5)}) {
    const SpectralDensity f(m);
    const double hp = std::numbers::pi / 2;
    const double total = simpson(
        [&](double phi) {
          const double c = std::cos(phi);
          if (c <= 0) return 0.0;
          return f(m.theta * std::tan(phi)) * m.theta / (c * c);
        },
        -hp, hp, 20000);
    EXPECT_NEAR(total, m.sigma2, 1e-6) << m.nu;
  }
}

TEST(MaternSpectral, CosineTransformRecoversCovariance) {
  const CovModel m = CovModel::matern(1.3, 2.0, 1.5);
  const SpectralDensity f(m);
  for (double h : {0.0, 0.3, 1.0}) {
    // K(h) = 2 int_0^inf f(l) cos(l h) dl with l = theta tan(phi).
    const double k = 2 * simpson(
                             [&](double phi) {
                               const double c = std::cos(phi);
                               if (c <= 0) return 0.0;
                               const double l = m.theta * std::tan(phi);
                               return f(l) * std::cos(l * h) * m.theta / (c * c);
                             },
                             0.0, std::numbers::pi / 2, 200000);
    EXPECT_NEAR(k, cov(m, h), 1e-6) << h;
  }
}

TEST(TaperSpectral, IdentityTaperHasNoDensity) {
  EXPECT_THROW(taper_spectral(TaperSpec::none(), std::vector<double>{1.0}), InvalidArgument);
}

TEST(TaperSpectral, MatchesIndependentQuadrature) {
  for (const auto& t : {TaperSpec::wendland1(1.0), TaperSpec::wendland2(0.3)}) {
    const std::vector<double> grid{0.0, 0.5, 3.0, 17.0, 60.0};
    const auto got = taper_spectral(t, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double want =
          simpson([&](double h) { return taper_value(t, h) * std::cos(grid[i] * h); }, 0.0, t.gamma, 40000) /
          std::numbers::pi;
      EXPECT_NEAR(got[i], want, 1e-9) << grid[i];
    }
  }
}

TEST(TaperSpectral, ContinuousAcrossEvaluationRegimes) {
  // The closed form switches method at lambda gamma = 8; both sides must match
  // direct quadrature.
  for (const auto& t : {TaperSpec::wendland1(0.5), TaperSpec::wendland2(0.5)}) {
    for (double s : {7.9, 7.999999, 8.0, 8.000001, 8.1, 0.0, 1e-8, 2000.0}) {
      const double l = s / t.gamma;
      const double want =
          simpson([&](double h) { return taper_value(t, h) * std::cos(l * h); }, 0.0, t.gamma, 200000) /
          std::numbers::pi;
      EXPECT_NEAR(taper_spectral_at(t, l), want, 1e-12 + 1e-7 * std::fabs(want)) << s;
    }
  }
}

TEST(TaperSpectral, IntegratesToOne) {
  for (const auto& t : {TaperSpec::wendland1(1.0), TaperSpec::wendland2(1.0)}) {
    // Even function: twice the trapezoid sum over [0, L].
    const double step = 0.25, upper = 400.0;
    double s = 0.5 * taper_spectral_at(t, 0.0);
    for (double l = step; l <= upper; l += step) s += taper_spectral_at(t, l);
    EXPECT_NEAR(2 * s * step, 1.0, 1e-3);
  }
}

TEST(TaperSpectral, WendlandOneTailConstant) {
  const double limit = 120 / std::numbers::pi;
  EXPECT_NEAR(limit, 38.1972, 1e-4);
  for (double l : {200.0, 400.0, 800.0, 3200.0}) {
    EXPECT_NEAR(std::pow(l, 4) * taper_spectral_at(TaperSpec::wendland1(1.0), l), limit, 0.01 * limit) << l;
  }
  // Scaling with gamma: lambda^4 f -> 120 / (pi gamma^3).
  const double g = 0.5;
  EXPECT_NEAR(std::pow(400.0, 4) * taper_spectral_at(TaperSpec::wendland1(g), 400.0), limit / (g * g * g),
              0.02 * limit / (g * g * g));
}

TEST(TaperSpectral, WendlandTwoTailConstant) {
  const double limit = 17920 / std::numbers::pi;
  EXPECT_NEAR(limit, 5704.1132, 1e-4);
  for (double l : {100.0, 200.0, 400.0, 800.0, 1600.0, 6400.0}) {
    EXPECT_NEAR(std::pow(l, 6) * taper_spectral_at(TaperSpec::wendland2(1.0), l), limit, 0.005 * limit) << l;
  }
}

TEST(PowerLawFit, RecoversExponent) {
  std::vector<double> x, y;
  for (int i = 1; i <= 20; ++i) {
    x.push_back(i * 3.0);
    y.push_back(7.0 * std::pow(i * 3.0, -2.5));
  }
  const PowerLawFit f = fit_power_law(x, y);
  EXPECT_NEAR(f.slope, -2.5, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 7.0, 1e-10);
  EXPECT_THROW(fit_power_law(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidArgument);
}

TEST(CheckA3, DocumentedVerdicts) {
  const A3Report w1_exp = check_a3(TaperSpec::wendland1(1.0), 0.5, 1000.0);
  EXPECT_TRUE(w1_exp.satisfied);
  EXPECT_NEAR(w1_exp.fitted_epsilon, 1.0, 0.05);
  EXPECT_NEAR(w1_exp.decay_exponent, 4.0, 0.05);

  const A3Report w2 = check_a3(TaperSpec::wendland2(1.0), 1.5, 1000.0);
  EXPECT_TRUE(w2.satisfied);
  EXPECT_NEAR(w2.decay_exponent, 6.0, 0.05);

  const A3Report w1_smooth = check_a3(TaperSpec::wendland1(1.0), 1.5, 1000.0);
  EXPECT_FALSE(w1_smooth.satisfied);
  EXPECT_LT(w1_smooth.fitted_epsilon, w1_smooth.threshold);

  EXPECT_TRUE(check_a3(TaperSpec::wendland2(0.3), 1.0, 1000.0).satisfied);
}

TEST(CheckA3, BoundConstantDominatesDensity) {
  const TaperSpec t = TaperSpec::wendland2(0.5);
  const A3Report r = check_a3(t, 1.0, 500.0);
  const double power = 1.0 + 0.5 + r.fitted_epsilon;
  for (double l : {0.0, 0.2, 3.0, 40.0, 300.0}) {
    EXPECT_LE(taper_spectral_at(t, l), r.fitted_M / std::pow(1 + l * l, power) * (1 + 1e-9)) << l;
  }
  EXPECT_THROW(check_a3(t, 1.0, 5.0), InvalidArgument);
}

TEST(Lemma4Ratio, IdentityTaperGivesZero) {
  const auto r = lemma4_ratio(CovModel::matern(1, 1, 1), TaperSpec::none(), std::vector<double>{0.0, 5.0, 100.0});
  for (double v : r) EXPECT_EQ(v, 0.0);
}

TEST(Lemma4Ratio, AgreesWithDirectTransformOfTaperedCovariance) {
  // Oracle: the tapered covariance has compact support, so its density is a
  // finite cosine transform.
  const CovModel m = CovModel::exponential(1, 1);
  const TaperSpec t = TaperSpec::wendland2(0.5);
  const SpectralDensity f(m);
  for (double l : {0.0, 2.0, 20.0, 80.0}) {
    const double tapered = simpson([&](double h) { return tapered_cov(m, t, h) * std::cos(l * h); }, 0.0, t.gamma,
                                   40000) / std::numbers::pi;
    const double want = (tapered - f(l)) / f(l);
    EXPECT_NEAR(lemma4_ratio_at(m, t, l), want, 1e-6 * std::max(1.0, std::fabs(want))) << l;
  }
}

TEST(Lemma4Ratio, FiniteNearOriginAndFastDecay) {
  const CovModel m = CovModel::exponential(1, 1);
  const TaperSpec t = TaperSpec::wendland2(0.3);
  EXPECT_TRUE(std::isfinite(lemma4_ratio_at(m, t, 0.0)));
  const auto grid = log_spaced(50.0, 800.0, 8);
  const auto ratio = lemma4_ratio(m, t, grid);
  EXPECT_GT(fit_decay_exponent(grid, ratio), 1.0);
}
