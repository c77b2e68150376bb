#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "taper_mle/likelihood.hpp"
#include "taper_mle/simulate.hpp"

using namespace taper_mle;

namespace {

const double kLog2Pi = std::log(2 * std::numbers::pi);

// Jittered grid with a random seed: random spacing, but no near-coincident points.
Design random_design(std::size_t n, std::mt19937_64& rng) { return jittered_design(n, 0.45, Seed{rng()}); }

Dataset white_noise(const Design& d, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::vector<double> x(d.size());
  for (auto& v : x) v = z(rng);
  return Dataset(d, std::move(x));
}

}  // namespace

TEST(ExactLoglik, SingleObservation) {
  const Dataset data(Design({0.3}), {1.5});
  const CovModel m = CovModel::matern(2.0, 1.0, 1.5);
  const double want = -0.5 * kLog2Pi - 0.5 * std::log(2.0) - 0.5 * 1.5 * 1.5 / 2.0;
  EXPECT_NEAR(exact_loglik(data, m).value, want, 1e-14);
  EXPECT_EQ(dloglik_dtheta(data, m), 0.0);
}

TEST(ExactLoglik, TwoObservationsClosedForm) {
  const Dataset data(Design({0.0, 0.4}), {0.7, -0.2});
  const double s2 = 1.3, th = 2.0;
  const double rho = std::exp(-th * 0.4);
  const double det = s2 * s2 * (1 - rho * rho);
  const double q = (0.49 + 0.04 + 2 * rho * 0.7 * 0.2) / (s2 * (1 - rho * rho));
  const double want = -kLog2Pi - 0.5 * std::log(det) - 0.5 * q;
  for (auto path : {SolverPath::Auto, SolverPath::Dense}) {
    const LogLik ll = exact_loglik(data, CovModel::exponential(s2, th), path);
    EXPECT_TRUE(ll.valid);
    EXPECT_NEAR(ll.value, want, 1e-13);
  }
  EXPECT_THROW(exact_loglik(data, CovModel::exponential(s2, th), SolverPath::Banded), InvalidArgument);
}

TEST(ExactLoglik, TridiagonalRouteMatchesDense) {
  std::mt19937_64 rng(1);
  const Design d = random_design(300, rng);
  const Dataset data = white_noise(d, rng);
  const CovModel m = CovModel::exponential(1.4, 6.0);
  const double ou = exact_loglik(data, m, SolverPath::Auto).value;
  const double dense = exact_loglik(data, m, SolverPath::Dense).value;
  EXPECT_NEAR(ou, dense, 1e-8 * std::fabs(dense));
  EXPECT_NEAR(dloglik_dtheta(data, m, SolverPath::Auto), dloglik_dtheta(data, m, SolverPath::Dense),
              1e-7 * (1 + std::fabs(dloglik_dtheta(data, m, SolverPath::Dense))));
  EXPECT_TRUE(CovFactor(d, m).is_ou());
  EXPECT_FALSE(CovFactor(d, m, TaperSpec::none(), SolverPath::Dense).is_ou());
}

TEST(ExactLoglik, FailedFactorizationIsReported) {
  // Numerically singular: a very smooth process on densely packed points.
  const Design d = regular_design(400);
  std::mt19937_64 rng(2);
  const LogLik ll = exact_loglik(white_noise(d, rng), CovModel::matern(1.0, 0.01, 20.0));
  EXPECT_FALSE(ll.valid);
  EXPECT_EQ(ll.value, -std::numeric_limits<double>::infinity());
  EXPECT_TRUE(ll.failed_pivot.has_value());
}

TEST(TaperedLoglik, IdentityTaperIsExact) {
  std::mt19937_64 rng(3);
  const Dataset data = white_noise(random_design(60, rng), rng);
  for (const auto& m : {CovModel::exponential(1, 2), CovModel::matern(1, 2, 1.5)}) {
    EXPECT_EQ(tapered_loglik(data, m, TaperSpec::none()).value, exact_loglik(data, m).value);
    EXPECT_EQ(tapered_dloglik_dtheta(data, m, TaperSpec::none()), dloglik_dtheta(data, m));
  }
}

TEST(TaperedLoglik, NarrowTaperDecouplesObservations) {
  std::mt19937_64 rng(4);
  const Design d = random_design(40, rng);
  const Dataset data = white_noise(d, rng);
  const CovModel m = CovModel::matern(1.7, 3.0, 1.0);
  double want = 0.0;
  for (double x : data.x) want += -0.5 * kLog2Pi - 0.5 * std::log(1.7) - 0.5 * x * x / 1.7;
  EXPECT_NEAR(tapered_loglik(data, m, TaperSpec::wendland2(0.5 * d.min_gap())).value, want, 1e-12 * std::fabs(want));
}

TEST(TaperedLoglik, BandedMatchesDense) {
  std::mt19937_64 rng(5);
  const Design d = random_design(200, rng);
  const Dataset data = white_noise(d, rng);
  for (const auto& m : {CovModel::exponential(1, 3), CovModel::matern(2, 5, 1.0)}) {
    for (const auto& t : {TaperSpec::wendland1(0.05), TaperSpec::wendland2(0.3)}) {
      const double b = tapered_loglik(data, m, t, SolverPath::Banded).value;
      const double f = tapered_loglik(data, m, t, SolverPath::Dense).value;
      EXPECT_NEAR(b, f, 1e-9 * std::fabs(f));
      EXPECT_NEAR(tapered_dloglik_dtheta(data, m, t, SolverPath::Banded),
                  tapered_dloglik_dtheta(data, m, t, SolverPath::Dense), 1e-8 * std::fabs(f));
    }
  }
}

TEST(Scores, ThetaScoreMatchesFiniteDifference) {
  std::mt19937_64 rng(6);
  // Smoother models need larger ranges to keep V well enough conditioned
  // for a central difference to resolve the score.
  std::uniform_real_distribution<double> th(3.0, 10.0), s2(0.5, 3.0), g(0.1, 0.5);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int rep = 0; rep < 20; ++rep) {
    const Design d = random_design(50, rng);
    const double nus[] = {0.5, 1.0, 1.5, 2.5};
    const double nu = nus[pick(rng)];
    const double theta = th(rng) * (nu > 2 ? 3.0 : 1.0);
    const CovModel m = nu == 0.5 ? CovModel::exponential(s2(rng), theta) : CovModel::matern(s2(rng), theta, nu);
    const Dataset data = sample_gp(d, m, Seed{rng()});
    const TaperSpec t = rep % 2 ? TaperSpec::wendland2(g(rng)) : TaperSpec::none();
    const double h = 1e-5 * m.theta;
    const double fd = (tapered_loglik(data, m.with_theta(m.theta + h), t).value -
                       tapered_loglik(data, m.with_theta(m.theta - h), t).value) /
                      (2 * h);
    const double an = tapered_dloglik_dtheta(data, m, t);
    EXPECT_NEAR(an, fd, 1e-4 * std::max(1.0, std::fabs(fd))) << "rep " << rep << " nu " << nu;

    const double hs = 1e-5 * m.sigma2;
    const double fds = (tapered_loglik(data, m.with_sigma2(m.sigma2 + hs), t).value -
                        tapered_loglik(data, m.with_sigma2(m.sigma2 - hs), t).value) /
                       (2 * hs);
    EXPECT_NEAR(tapered_dloglik_dsigma2(data, m, t), fds, 1e-5 * std::max(1.0, std::fabs(fds))) << "rep " << rep;
  }
}

TEST(Scores, SigmaScoreVanishesAtClosedForm) {
  std::mt19937_64 rng(7);
  const Dataset data = white_noise(random_design(80, rng), rng);
  const CovModel unit = CovModel::matern(1, 2, 1);
  const double s2 = CovFactor(data.design, unit).quad_form(data.x) / 80.0;
  EXPECT_NEAR(dloglik_dsigma2(data, unit.with_sigma2(s2)), 0.0, 1e-10 * 80 / s2);
  const double far = dloglik_dsigma2(data, unit.with_sigma2(1e8));
  EXPECT_LT(far, 0.0);
  EXPECT_GT(far, -1e-6);
}

TEST(FixedTheta, IdentityCorrelationGivesMeanSquare) {
  // A taper narrower than every gap makes R the identity.
  const Design d({0.0, 0.25, 0.5, 0.75, 1.0});
  const Dataset data(d, {1.0, -2.0, 0.5, 0.0, 3.0});
  const FitResult r = sigma2_mle_fixed_theta(data, 1.0, 0.5, TaperSpec::wendland1(0.2));
  EXPECT_NEAR(r.sigma2_hat, (1 + 4 + 0.25 + 0 + 9) / 5.0, 1e-15);
  EXPECT_TRUE(r.tapered);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.microergodic, r.sigma2_hat * 1.0, 1e-15);
  EXPECT_THROW(sigma2_mle_fixed_theta(data, 0.0, 0.5, TaperSpec::none()), InvalidArgument);
}

namespace {

template <class F>
double golden_argmax(F&& f, double a, double b, double tol) {
  const double phi = (std::sqrt(5.0) - 1) / 2;
  double c = b - phi * (b - a), e = a + phi * (b - a);
  double fc = f(c), fe = f(e);
  while (b - a > tol) {
    if (fc > fe) {
      b = e; e = c; fe = fc; c = b - phi * (b - a); fc = f(c);
    } else {
      a = c; c = e; fc = fe; e = a + phi * (b - a); fe = f(e);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(FixedTheta, AgreesWithNumericalMaximizer) {
  std::mt19937_64 rng(8);
  const double theta1 = 2.0;
  const Dataset data = sample_gp(random_design(60, rng), CovModel::matern(1.3, 3.0, 1.0), Seed{8});
  for (const auto& t : {TaperSpec::none(), TaperSpec::wendland2(0.3)}) {
    const FitResult r = sigma2_mle_fixed_theta(data, theta1, 1.0, t);

    // Coarse pass on the full log-likelihood in log sigma2.
    auto ll = [&](double ls) { return tapered_loglik(data, CovModel::matern(std::exp(ls), theta1, 1.0), t).value; };
    const double s0 = std::exp(golden_argmax(ll, std::log(1e-3), std::log(1e3), 1e-7));
    EXPECT_NEAR(r.sigma2_hat, s0, 1e-5 * s0);

    // Fine pass on l(s0 (1 + e)) - l(s0), written so that both terms shrink with e
    // and roundoff does not flatten the peak. The quadratic form comes from a
    // separate dense LDLT solve.
    const Eigen::MatrixXd corr = build_dense_tapered(data.design, CovModel::matern(1.0, theta1, 1.0), t).matrix();
    const Eigen::Map<const Eigen::VectorXd> x(data.x.data(), 60);
    const double q = x.dot(corr.ldlt().solve(x));
    auto rel = [&](double e) { return -30.0 * std::log1p(e) + 0.5 * (q / s0) * e / (1 + e); };
    const double s_star = s0 * (1 + golden_argmax(rel, -1e-3, 1e-3, 1e-12));
    EXPECT_NEAR(r.sigma2_hat, s_star, 1e-8 * s_star);
    EXPECT_NEAR(r.loglik, tapered_loglik(data, CovModel::matern(r.sigma2_hat, theta1, 1.0), t).value,
                1e-10 * std::fabs(r.loglik));
  }
}

TEST(FixedTheta, ScaleEquivariance) {
  std::mt19937_64 rng(9);
  Dataset data = white_noise(random_design(40, rng), rng);
  const double base = sigma2_mle_fixed_theta(data, 1.5, 1.5, TaperSpec::none()).sigma2_hat;
  for (auto& v : data.x) v *= 3.0;
  EXPECT_NEAR(sigma2_mle_fixed_theta(data, 1.5, 1.5, TaperSpec::none()).sigma2_hat, 9 * base, 1e-12 * 9 * base);
}

TEST(FixedTheta, ProfileDominatesEveryVariance) {
  std::mt19937_64 rng(10);
  const Dataset data = white_noise(random_design(50, rng), rng);
  const FitResult r = sigma2_mle_fixed_theta(data, 3.0, 0.5, TaperSpec::none());
  for (double s2 : {0.1, 0.5, 0.9, 1.1, 2.0, 10.0}) {
    EXPECT_GE(r.loglik, exact_loglik(data, CovModel::exponential(s2 * r.sigma2_hat, 3.0)).value);
  }
}

TEST(FixedTheta, EstimatorReusableAcrossDatasets) {
  std::mt19937_64 rng(12);
  const Design d = random_design(70, rng);
  const FixedThetaEstimator est(d, 2.0, 1.0, TaperSpec::wendland1(0.2));
  for (int rep = 0; rep < 3; ++rep) {
    const Dataset data = white_noise(d, rng);
    EXPECT_EQ(est.fit(data.x).sigma2_hat,
              sigma2_mle_fixed_theta(data, 2.0, 1.0, TaperSpec::wendland1(0.2)).sigma2_hat);
  }
}

TEST(JointMle, RecoversMicroergodicParameter) {
  const Design d = regular_design(2000);
  const CovModel truth = CovModel::exponential(1.0, 1.5);
  const Dataset data = sample_ou_markov(d, truth.theta, truth.sigma2, Seed{77});
  const FitResult r = joint_mle_exponential(data, ParamBox{}, TaperSpec::none());
  EXPECT_TRUE(r.converged);
  // sd of the microergodic estimate is sqrt(2/n) times the true value.
  const double se = std::sqrt(2.0 / 2000.0) * truth.microergodic();
  EXPECT_NEAR(r.microergodic, truth.microergodic(), 3 * se);
}

TEST(JointMle, FirstOrderConditions) {
  std::mt19937_64 rng(13);
  const Design d = random_design(300, rng);
  const Dataset data = sample_ou_markov(d, 2.0, 1.0, Seed{5});
  const ParamBox box{0.1, 20.0, 0.05, 20.0};
  for (const auto& t : {TaperSpec::none(), TaperSpec::wendland2(0.3)}) {
    const FitResult r = joint_mle_exponential(data, box, t);
    ASSERT_TRUE(r.converged);
    if (r.theta_hat > box.a * 1.01 && r.theta_hat < box.b * 0.99 && r.sigma2_hat > box.w && r.sigma2_hat < box.v) {
      const CovModel at = CovModel::exponential(r.sigma2_hat, r.theta_hat);
      EXPECT_NEAR(tapered_dloglik_dtheta(data, at, t), 0.0, 1e-4 * 300);
      EXPECT_NEAR(tapered_dloglik_dsigma2(data, at, t), 0.0, 1e-8 * 300);
    }
    // Never worse than any grid point.
    ExponentialProfileMle est(d, box, t);
    for (double th : est.grid()) {
      EXPECT_GE(r.loglik + 1e-9, tapered_loglik(data, CovModel::exponential(box.clamp_sigma2(
                                                         CovFactor(d, CovModel::exponential(1, th), t).quad_form(data.x) / 300.0), th), t).value);
    }
  }
}

TEST(JointMle, DegenerateBoxPinsParameters) {
  std::mt19937_64 rng(14);
  const Dataset data = white_noise(random_design(30, rng), rng);
  const FitResult r = joint_mle_exponential(data, ParamBox{1.3, 1.3, 0.7, 0.7}, TaperSpec::none());
  EXPECT_EQ(r.theta_hat, 1.3);
  EXPECT_EQ(r.sigma2_hat, 0.7);
  EXPECT_NEAR(r.loglik, exact_loglik(data, CovModel::exponential(0.7, 1.3)).value, 1e-10);
  EXPECT_THROW(joint_mle_exponential(data, ParamBox{2, 1, 1, 1}, TaperSpec::none()), InvalidArgument);
}

TEST(JointMle, StaysInsideBox) {
  std::mt19937_64 rng(15);
  const Dataset data = sample_ou_markov(random_design(200, rng), 30.0, 5.0, Seed{1});
  const ParamBox box{0.25, 4, 0.25, 4};
  const FitResult r = joint_mle_exponential(data, box, TaperSpec::none());
  EXPECT_GE(r.theta_hat, box.a);
  EXPECT_LE(r.theta_hat, box.b);
  EXPECT_GE(r.sigma2_hat, box.w);
  EXPECT_LE(r.sigma2_hat, box.v);
}
