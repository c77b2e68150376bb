#pragma once

// Sampling designs on [0, 1], observation datasets, and the seeded random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taper_mle/errors.hpp"

namespace taper_mle {

/// Strictly increasing sampling locations in [0, 1].
class Design {
 public:
  Design() = default;

  explicit Design(std::vector<double> t) : t_(std::move(t)) {
    if (t_.empty()) throw InvalidArgument("design needs at least one location");
    for (std::size_t i = 0; i < t_.size(); ++i) {
      if (!std::isfinite(t_[i]) || t_[i] < 0.0 || t_[i] > 1.0) {
        throw InvalidArgument("design locations must lie in [0, 1]");
      }
      if (i > 0 && !(t_[i] > t_[i - 1])) {
        throw InvalidArgument("design locations must be strictly increasing (index " + std::to_string(i) + ")");
      }
    }
  }

  std::size_t size() const noexcept { return t_.size(); }
  double operator[](std::size_t i) const { return t_[i]; }
  std::span<const double> locations() const noexcept { return t_; }

  /// t_k - t_{k-1} for k >= 1.
  double gap(std::size_t k) const { return t_[k] - t_[k - 1]; }

  double min_gap() const {
    double g = INFINITY;
    for (std::size_t k = 1; k < t_.size(); ++k) g = std::min(g, gap(k));
    return g;
  }

  double max_gap() const {
    double g = 0.0;
    for (std::size_t k = 1; k < t_.size(); ++k) g = std::max(g, gap(k));
    return g;
  }

  double length() const { return t_.back() - t_.front(); }

  /// n * min gap and n * max gap, the constants bounding n * Delta_k.
  std::pair<double, double> spacing_constants() const {
    const auto n = static_cast<double>(t_.size());
    return {n * min_gap(), n * max_gap()};
  }

  friend bool operator==(const Design&, const Design&) = default;

 private:
  std::vector<double> t_;
};

/// One realization of the process at the design locations.
struct Dataset {
  Design design;
  std::vector<double> x;

  Dataset() = default;
  Dataset(Design d, std::vector<double> values) : design(std::move(d)), x(std::move(values)) {
    if (x.size() != design.size()) throw InvalidArgument("dataset length does not match design");
    for (double v : x) {
      if (!std::isfinite(v)) throw InvalidArgument("dataset values must be finite");
    }
  }

  std::size_t size() const noexcept { return x.size(); }
};

// ---------------------------------------------------------------------------
// Random streams. Uniforms are a counter-based SplitMix64 sequence; normals use
// the Box-Muller transform on consecutive uniform pairs.

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr const char* kNormalTransform = "box-muller";

/// Root seed with a stable derivation rule for independent child streams.
struct Seed {
  std::uint64_t root = 0;

  std::uint64_t child(std::uint64_t index) const {
    return splitmix64(splitmix64(root) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
  }

  Seed derive(std::uint64_t index) const { return Seed{child(index)}; }
};

class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : seed_(seed) {}

  /// Uniform on the open interval (0, 1).
  double next() {
    const std::uint64_t bits = splitmix64(seed_ + counter_++ * 0x9E3779B97F4A7C15ULL);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : uniform_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_.next();
    const double u2 = uniform_.next();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  UniformStream uniform_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<double> standard_normals(std::uint64_t seed, std::size_t n) {
  NormalStream s(seed);
  std::vector<double> z(n);
  for (auto& v : z) v = s.next();
  return z;
}

// ---------------------------------------------------------------------------

inline Design regular_design(std::size_t n) {
  if (n < 2) throw InvalidArgument("regular_design requires n >= 2");
  std::vector<double> t(n);
  const double step = 1.0 / static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k) * step;
  t.back() = 1.0;
  return Design(std::move(t));
}

/// Regular grid with each interior point moved uniformly within
/// +-jitter_frac/(n-1). Endpoints stay at 0 and 1; the minimum gap is at least
/// (1 - 2 jitter_frac)/(n-1).
inline Design jittered_design(std::size_t n, double jitter_frac, Seed seed) {
  if (n < 2) throw InvalidArgument("jittered_design requires n >= 2");
  if (!(jitter_frac >= 0.0) || !(jitter_frac < 0.5)) {
    throw InvalidArgument("jitter_frac must lie in [0, 0.5); larger jitter breaks the n*gap lower bound");
  }
  const double step = 1.0 / static_cast<double>(n - 1);
  UniformStream u(seed.child(n));
  std::vector<double> t(n);
  t.front() = 0.0;
  t.back() = 1.0;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    t[k] = static_cast<double>(k) * step + (2.0 * u.next() - 1.0) * jitter_frac * step;
  }
  std::sort(t.begin(), t.end());
  return Design(std::move(t));
}

}  // namespace taper_mle
