#pragma once

// Exact Gaussian process simulation, the Markov-recursion OU sampler and its
// whitening inverse, and "t,x" CSV round trips.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taper_mle/covmodel.hpp"
#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"
#include "taper_mle/linalg.hpp"

namespace taper_mle {

/// Draws x = L z with L L' = V from one dense factorization reused across seeds.
class GpSampler {
 public:
  GpSampler(Design design, const CovModel& model)
      : design_(std::move(design)), model_(model), chol_(build_dense(design_, model_)) {}

  const Design& design() const noexcept { return design_; }
  const CovModel& model() const noexcept { return model_; }

  Dataset sample(Seed seed) const {
    const std::size_t n = design_.size();
    const std::vector<double> z = standard_normals(seed.root, n);
    const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd x = chol_.factor().triangularView<Eigen::Lower>() * zv;
    return Dataset(design_, std::vector<double>(x.data(), x.data() + x.size()));
  }

 private:
  Design design_;
  CovModel model_;
  DenseCholesky chol_;
};

inline Dataset sample_gp(const Design& design, const CovModel& model, Seed seed) {
  return GpSampler(design, model).sample(seed);
}

/// X_1 = sigma Z_1, X_k = e^{-theta gap} X_{k-1} + sigma sqrt(1 - e^{-2 theta gap}) Z_k,
/// consuming the same normal stream as sample_gp.
inline Dataset sample_ou_markov(const Design& design, double theta, double sigma2, Seed seed) {
  CovModel::exponential(sigma2, theta);
  const std::size_t n = design.size();
  const double sigma = std::sqrt(sigma2);
  NormalStream z(seed.root);
  std::vector<double> x(n);
  x[0] = sigma * z.next();
  for (std::size_t k = 1; k < n; ++k) {
    const double g = design.gap(k);
    x[k] = std::exp(-theta * g) * x[k - 1] + sigma * std::sqrt(-std::expm1(-2.0 * theta * g)) * z.next();
  }
  return Dataset(design, std::move(x));
}

/// W_k = (X_k - e^{-theta gap} X_{k-1}) / (sigma sqrt(1 - e^{-2 theta gap})), k = 2..n.
inline std::vector<double> whiten_ou(const Dataset& data, double theta0, double sigma2_0) {
  CovModel::exponential(sigma2_0, theta0);
  const std::size_t n = data.size();
  if (n < 2) throw InvalidArgument("whiten_ou requires at least two observations");
  const double sigma = std::sqrt(sigma2_0);
  std::vector<double> w(n - 1);
  for (std::size_t k = 1; k < n; ++k) {
    const double g = data.design.gap(k);
    w[k - 1] = (data.x[k] - std::exp(-theta0 * g) * data.x[k - 1]) /
               (sigma * std::sqrt(-std::expm1(-2.0 * theta0 * g)));
  }
  return w;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const Dataset& data) {
  os << "t,x\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << format_double(data.design[i]) << ',' << format_double(data.x[i]) << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_csv(f, data);
  if (!f) throw IoError("write to '" + path + "' failed");
}

struct CsvRead {
  Dataset data;
  bool was_sorted = true;  // false when rows had to be reordered by t
};

inline CsvRead read_csv(std::istream& is, const std::string& name = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,x") throw ParseError(name + ": expected header 't,x'");

  std::vector<std::pair<double, double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected two fields");
    }
    auto parse = [&](const std::string& field) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != field.size() || !std::isfinite(v)) {
        throw ParseError(name + ":" + std::to_string(lineno) + ": not a finite number '" + field + "'");
      }
      return v;
    };
    rows.emplace_back(parse(line.substr(0, comma)), parse(line.substr(comma + 1)));
  }
  if (rows.empty()) throw ParseError(name + ": no data rows");

  CsvRead out;
  out.was_sorted = std::is_sorted(rows.begin(), rows.end(),
                                  [](const auto& a, const auto& b) { return a.first < b.first; });
  if (!out.was_sorted) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) {
      throw ParseError(name + ": duplicate location t = " + format_double(rows[i].first));
    }
  }
  std::vector<double> t(rows.size()), x(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[i] = rows[i].first;
    x[i] = rows[i].second;
  }
  out.data = Dataset(Design(std::move(t)), std::move(x));
  return out;
}

inline CsvRead read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return read_csv(f, path);
}

}  // namespace taper_mle
