#pragma once

// Monte Carlo experiments for the fixed-domain limit laws: normality of the
// microergodic estimators, growth of the tapered/exact likelihood gap, and the
// trace gap between equivalent measures.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "taper_mle/covmodel.hpp"
#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"
#include "taper_mle/likelihood.hpp"
#include "taper_mle/linalg.hpp"
#include "taper_mle/simulate.hpp"
#include "taper_mle/spectral.hpp"

namespace taper_mle {

// ---------------------------------------------------------------------------
// Threading

/// Worker count: TAPER_MLE_THREADS if set, else `requested` if positive, else all cores.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (const char* env = std::getenv("TAPER_MLE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any body is rethrown after all workers stop.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(count, 1)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      while (!stop.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          stop.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Normality

struct NormalityReport {
  double ks_stat = 0.0;
  double ks_p = 0.0;
  double mean = 0.0;
  double var = 0.0;
  double var_ratio = 0.0;
};

/// Asymptotic Kolmogorov tail P(K > x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_tail(double x) {
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

inline double normal_cdf(double x, double var) { return 0.5 * std::erfc(-x / std::sqrt(2.0 * var)); }

/// One-sample Kolmogorov-Smirnov test against N(0, target_var) with the
/// asymptotic p-value (Stephens' small-sample scaling of the statistic).
inline NormalityReport normality_check(std::span<const double> z, double target_var) {
  if (z.size() < 30) throw InvalidArgument("normality_check needs at least 30 values");
  if (!(target_var > 0.0) || !std::isfinite(target_var)) throw InvalidArgument("target variance must be positive");
  const double n = static_cast<double>(z.size());
  NormalityReport r;
  r.mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : z) ss += (v - r.mean) * (v - r.mean);
  r.var = ss / (n - 1.0);
  if (!(r.var > 0.0)) throw InvalidArgument("normality_check: sample has zero variance");
  r.var_ratio = r.var / target_var;

  std::vector<double> s(z.begin(), z.end());
  std::sort(s.begin(), s.end());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = normal_cdf(s[i], target_var);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  r.ks_stat = d;
  const double rn = std::sqrt(n);
  r.ks_p = kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d);
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

// ---------------------------------------------------------------------------
// Designs and seeds shared by the experiments

enum class DesignKind { Regular, Jittered };

inline std::string to_string(DesignKind k) { return k == DesignKind::Regular ? "regular" : "jittered"; }

inline DesignKind parse_design_kind(std::string_view s) {
  if (s == "regular") return DesignKind::Regular;
  if (s == "jittered") return DesignKind::Jittered;
  throw InvalidArgument("unknown design kind '" + std::string(s) + "'");
}

inline Design make_design(DesignKind kind, std::size_t n, double jitter_frac, Seed seed) {
  return kind == DesignKind::Regular ? regular_design(n) : jittered_design(n, jitter_frac, seed);
}

/// Stream for replicate r at sample size n.
inline Seed replicate_seed(Seed root, std::size_t n, std::size_t r) { return root.derive(n).derive(r); }

// ---------------------------------------------------------------------------
// Microergodic Monte Carlo

struct FixedRange {
  double theta1 = 1.0;
};

struct McConfig {
  CovModel truth = CovModel::exponential(1.0, 1.0);
  std::variant<FixedRange, ParamBox> working = ParamBox{};
  TaperSpec taper = TaperSpec::none();
  std::vector<std::size_t> n_list;
  std::size_t replicates = 2;
  Seed seed{};
  DesignKind design_kind = DesignKind::Regular;
  double jitter_frac = 0.0;
  unsigned threads = 0;

  bool joint() const noexcept { return std::holds_alternative<ParamBox>(working); }

  void validate() const {
    truth.validate();
    if (!taper.is_none()) taper.validate();
    if (replicates < 2) throw InvalidArgument("replicates must be at least 2");
    if (n_list.empty()) throw InvalidArgument("n_list must not be empty");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      if (n_list[i] < 2) throw InvalidArgument("every n in n_list must be at least 2");
      if (i > 0 && n_list[i] <= n_list[i - 1]) throw InvalidArgument("n_list must be strictly increasing");
    }
    if (const auto* box = std::get_if<ParamBox>(&working)) {
      box->validate();
      if (truth.family != CovFamily::Exponential) {
        throw InvalidArgument("joint (theta, sigma2) estimation is available for the exponential model only");
      }
    } else {
      const double th = std::get<FixedRange>(working).theta1;
      if (!(th > 0.0) || !std::isfinite(th)) throw InvalidArgument("theta1 must be positive and finite");
    }
    if (design_kind == DesignKind::Jittered && !(jitter_frac >= 0.0 && jitter_frac < 0.5)) {
      throw InvalidArgument("jitter_frac must lie in [0, 0.5)");
    }
  }
};

/// Standardized statistics sqrt(n) (microergodic_hat - truth) for one estimator at one n.
struct McSeries {
  bool tapered = false;
  std::vector<double> z;
  std::vector<std::size_t> replicate;  // replicate index of each z
  std::size_t failures = 0;
  NormalityReport normality;
};

struct McPoint {
  std::size_t n = 0;
  McSeries exact;
  std::optional<McSeries> tapered;
};

struct McSummary {
  McConfig config;
  std::vector<McPoint> points;
  std::optional<A3Report> a3;  // Matern with a taper only
  double runtime_seconds = 0.0;

  double target_microergodic() const { return config.truth.microergodic(); }
  double target_var() const {
    const double m = config.truth.microergodic();
    return 2.0 * m * m;
  }
};

// Failed replicates beyond this fraction abort the experiment.
inline constexpr double kMaxFailureFraction = 0.01;

namespace detail {

// Fits one estimator family (exact or tapered) on a fixed design.
class MicroergodicFitter {
 public:
  MicroergodicFitter(const Design& design, const McConfig& cfg, const TaperSpec& taper) {
    if (const auto* box = std::get_if<ParamBox>(&cfg.working)) {
      impl_.emplace<ExponentialProfileMle>(design, *box, taper);
    } else {
      impl_.emplace<FixedThetaEstimator>(design, std::get<FixedRange>(cfg.working).theta1, cfg.truth.nu, taper);
    }
  }

  FitResult fit(std::span<const double> x) const {
    return std::visit(
        [&](const auto& f) -> FitResult {
          if constexpr (std::is_same_v<std::decay_t<decltype(f)>, std::monostate>) {
            throw InvalidArgument("fitter not initialized");
          } else {
            return f.fit(x);
          }
        },
        impl_);
  }

 private:
  std::variant<std::monostate, ExponentialProfileMle, FixedThetaEstimator> impl_;
};

inline void summarize(McSeries& s, double target_var, std::size_t replicates) {
  if (static_cast<double>(s.failures) > kMaxFailureFraction * static_cast<double>(replicates)) {
    throw ConvergenceError(std::to_string(s.failures) + " of " + std::to_string(replicates) +
                           " replicates failed, above the 1% cap");
  }
  if (s.z.size() >= 30) s.normality = normality_check(s.z, target_var);
}

}  // namespace detail

inline McSummary mc_microergodic(const McConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  McSummary out;
  out.config = cfg;
  const bool tapered = !cfg.taper.is_none();
  if (tapered && cfg.truth.family == CovFamily::Matern) out.a3 = check_a3(cfg.taper, cfg.truth.nu, 1000.0);

  const double target = cfg.truth.microergodic();
  const unsigned threads = resolve_threads(cfg.threads);
  for (std::size_t n : cfg.n_list) {
    const Design design = make_design(cfg.design_kind, n, cfg.jitter_frac, cfg.seed.derive(n));
    const GpSampler sampler(design, cfg.truth);
    const detail::MicroergodicFitter exact(design, cfg, TaperSpec::none());
    std::optional<detail::MicroergodicFitter> tap;
    if (tapered) tap.emplace(design, cfg, cfg.taper);

    const std::size_t R = cfg.replicates;
    std::vector<std::optional<double>> z_exact(R), z_tap(R);
    const double root_n = std::sqrt(static_cast<double>(n));
    auto standardize = [&](const detail::MicroergodicFitter& f, std::span<const double> x) -> std::optional<double> {
      try {
        const FitResult r = f.fit(x);
        if (!r.converged || !std::isfinite(r.microergodic)) return std::nullopt;
        return root_n * (r.microergodic - target);
      } catch (const FactorizationError&) {
        return std::nullopt;
      }
    };
    parallel_for(R, threads, [&](std::size_t r) {
      const Dataset data = sampler.sample(replicate_seed(cfg.seed, n, r));
      z_exact[r] = standardize(exact, data.x);
      if (tap) z_tap[r] = standardize(*tap, data.x);
    });

    McPoint point;
    point.n = n;
    auto collect = [&](const std::vector<std::optional<double>>& zs, bool is_tapered) {
      McSeries s;
      s.tapered = is_tapered;
      for (std::size_t r = 0; r < R; ++r) {
        if (zs[r]) {
          s.z.push_back(*zs[r]);
          s.replicate.push_back(r);
        } else {
          ++s.failures;
        }
      }
      detail::summarize(s, out.target_var(), R);
      return s;
    };
    point.exact = collect(z_exact, false);
    if (tapered) point.tapered = collect(z_tap, true);
    out.points.push_back(std::move(point));
  }
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood gap traces

struct ParamPoint {
  double theta = 1.0;
  double sigma2 = 1.0;
};

/// Gap statistics for one (n, parameter point) over all seeds.
struct GapCell {
  std::size_t n = 0;
  ParamPoint param;
  std::vector<double> gap;         // l_tap - l, one per seed
  std::vector<double> score_gap;   // tapered minus exact score, one per seed
  double median_abs_gap = 0.0;
  double median_abs_gap_sqrt_n = 0.0;
  double median_abs_score_gap = 0.0;
  double median_abs_score_gap_sqrt_n = 0.0;
};

struct GapTrace {
  CovModel truth;
  TaperSpec taper;
  std::vector<std::size_t> n_list;
  std::vector<ParamPoint> params;
  std::size_t seeds = 0;
  std::string score_parameter;  // "theta" (exponential) or "sigma2" (Matern)
  std::vector<GapCell> cells;   // n-major, then parameter order

  const GapCell& cell(std::size_t n_index, std::size_t param_index) const {
    return cells.at(n_index * params.size() + param_index);
  }
};

/// Evaluates the exact and tapered log-likelihoods (and the matching score:
/// theta for the exponential model, sigma2 for Matern) on one simulated
/// realization per (n, seed) on the regular design.
inline GapTrace gap_trace(const CovModel& truth, const std::vector<ParamPoint>& params, const TaperSpec& taper,
                          const std::vector<std::size_t>& n_list, std::size_t seeds, Seed seed,
                          unsigned threads = 0) {
  truth.validate();
  if (params.empty()) throw InvalidArgument("gap_trace needs at least one parameter point");
  if (seeds < 1) throw InvalidArgument("gap_trace needs at least one seed");
  if (n_list.empty()) throw InvalidArgument("n_list must not be empty");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw InvalidArgument("n_list must be strictly increasing");
  }
  if (static_cast<double>(n_list.back()) < 8.0 * static_cast<double>(n_list.front())) {
    throw InvalidArgument("n_list must span at least a factor of 8");
  }

  GapTrace out;
  out.truth = truth;
  out.taper = taper;
  out.n_list = n_list;
  out.params = params;
  out.seeds = seeds;
  const bool exponential = truth.family == CovFamily::Exponential;
  out.score_parameter = exponential ? "theta" : "sigma2";
  const unsigned workers = resolve_threads(threads);

  for (std::size_t n : n_list) {
    const Design design = regular_design(n);
    const GpSampler sampler(design, truth);
    std::vector<Dataset> data;
    data.reserve(seeds);
    for (std::size_t s = 0; s < seeds; ++s) data.push_back(sampler.sample(replicate_seed(seed, n, s)));

    std::vector<GapCell> row(params.size());
    parallel_for(params.size(), workers, [&](std::size_t p) {
      GapCell& c = row[p];
      c.n = n;
      c.param = params[p];
      if (taper.is_none()) {
        c.gap.assign(seeds, 0.0);
        c.score_gap.assign(seeds, 0.0);
        return;
      }
      const CovModel model = exponential ? CovModel::exponential(c.param.sigma2, c.param.theta)
                                         : CovModel::matern(c.param.sigma2, c.param.theta, truth.nu);
      const CovFactor full(design, model);
      const CovFactor tap(design, model, taper);
      const double ld_full = full.log_det();
      const double ld_tap = tap.log_det();
      double tr_full = 0.0, tr_tap = 0.0;
      if (exponential) {
        tr_full = full.theta_trace();
        tr_tap = tap.theta_trace();
      }
      for (const Dataset& d : data) {
        const double q_full = full.quad_form(d.x);
        const double q_tap = tap.quad_form(d.x);
        c.gap.push_back(-0.5 * (ld_tap - ld_full) - 0.5 * (q_tap - q_full));
        if (exponential) {
          const double s_full = -0.5 * tr_full + 0.5 * full.theta_form(d.x);
          const double s_tap = -0.5 * tr_tap + 0.5 * tap.theta_form(d.x);
          c.score_gap.push_back(s_tap - s_full);
        } else {
          // The sigma2 score is (x'V^{-1}x - n) / (2 sigma2) for either matrix.
          c.score_gap.push_back((q_tap - q_full) / (2.0 * model.sigma2));
        }
      }
    });
    const double root_n = std::sqrt(static_cast<double>(n));
    for (GapCell& c : row) {
      auto abs_all = [](const std::vector<double>& v) {
        std::vector<double> a(v.size());
        std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::fabs(x); });
        return a;
      };
      c.median_abs_gap = median(abs_all(c.gap));
      c.median_abs_gap_sqrt_n = c.median_abs_gap / root_n;
      c.median_abs_score_gap = median(abs_all(c.score_gap));
      c.median_abs_score_gap_sqrt_n = c.median_abs_score_gap / root_n;
      out.cells.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimator proximity and trace gap

/// n |sigma2_hat_tap - sigma2_hat| at fixed theta1, one row per n with one value per seed.
struct ProximityTrace {
  std::vector<std::size_t> n_list;
  std::vector<std::vector<double>> scaled_diff;
};

inline ProximityTrace proximity_trace(const CovModel& truth, double theta1, const TaperSpec& taper,
                                      const std::vector<std::size_t>& n_list, std::size_t seeds, Seed seed,
                                      unsigned threads = 0) {
  truth.validate();
  if (seeds < 1) throw InvalidArgument("proximity_trace needs at least one seed");
  ProximityTrace out;
  out.n_list = n_list;
  for (std::size_t n : n_list) {
    const Design design = regular_design(n);
    const GpSampler sampler(design, truth);
    const FixedThetaEstimator exact(design, theta1, truth.nu, TaperSpec::none());
    const FixedThetaEstimator tap(design, theta1, truth.nu, taper);
    std::vector<double> row(seeds);
    parallel_for(seeds, resolve_threads(threads), [&](std::size_t s) {
      const Dataset d = sampler.sample(replicate_seed(seed, n, s));
      row[s] = static_cast<double>(n) * std::fabs(tap.fit(d.x).sigma2_hat - exact.fit(d.x).sigma2_hat);
    });
    out.scaled_diff.push_back(std::move(row));
  }
  return out;
}

/// trace(V0 V1^{-1}) - n, by factorizing V1 and solving against the columns of V0.
inline double trace_gap_theorem3(const Design& design, const CovModel& f0, const CovModel& f1) {
  f0.validate();
  f1.validate();
  if (f0 == f1) return 0.0;
  const DenseSpd v0 = build_dense(design, f0);
  const DenseCholesky c1(build_dense(design, f1));
  const Eigen::MatrixXd x = c1.solve(v0.matrix());
  return x.trace() - static_cast<double>(design.size());
}

/// Least-squares slope of y on x.
inline double ls_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("ls_slope needs two or more paired values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("ls_slope: x values are all equal");
  return sxy / sxx;
}

}  // namespace taper_mle
