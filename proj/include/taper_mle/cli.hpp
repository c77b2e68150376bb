#pragma once

// Configuration handling and the command implementations behind the
// taper_mle executable. Commands read one JSON config document, write CSV
// and JSON outputs, and report a stable exit code.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taper_mle/asymptotics.hpp"
#include "taper_mle/covmodel.hpp"
#include "taper_mle/design.hpp"
#include "taper_mle/errors.hpp"
#include "taper_mle/likelihood.hpp"
#include "taper_mle/linalg.hpp"
#include "taper_mle/simulate.hpp"
#include "taper_mle/spectral.hpp"

namespace taper_mle::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSpecVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitAcceptance = 4,
  kExitNoConvergence = 5,
};

/// Invalid or incomplete configuration; the message names the offending key.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// ---------------------------------------------------------------------------
// Config document

// Every accepted leaf key, as a dotted path.
inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed",
      "model.family", "model.sigma2", "model.theta", "model.nu",
      "taper.family", "taper.gamma",
      "design.kind", "design.n", "design.jitter",
      "fit.method", "fit.theta1",
      "box.a", "box.b", "box.w", "box.v",
      "mc.replicates", "mc.n_list", "mc.theta1", "mc.threads",
      "mc.acceptance.var_min", "mc.acceptance.var_max", "mc.acceptance.mean_abs_max", "mc.acceptance.ks_p_min",
      "diag.checks", "diag.lambda_max", "diag.lemma4_grid",
      "diag.reference.family", "diag.reference.sigma2", "diag.reference.theta", "diag.reference.nu",
      "bench.n_list", "bench.runs",
      "output.csv", "output.sidecar", "output.json", "output.z_csv",
  };
  return keys;
}

class Config {
 public:
  explicit Config(Json doc) : doc_(std::move(doc)) {
    if (!doc_.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(doc_, "");
  }

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    Json doc;
    try {
      doc = Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return Config(std::move(doc));
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  bool has_section(const std::string& name) const {
    return doc_.contains(name) && doc_[name].is_object();
  }

  double number(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError("config key '" + key + "' must be finite");
    return d;
  }

  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  double positive(const std::string& key) const {
    const double v = number(key);
    if (!(v > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
    return v;
  }

  std::uint64_t count(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("config key '" + key + "' must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  std::string text(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_array() || v.empty()) throw ConfigError("config key '" + key + "' must be a non-empty array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<std::int64_t>() < 0)) {
        throw ConfigError("config key '" + key + "' must hold nonnegative integers");
      }
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_array() || v.empty()) throw ConfigError("config key '" + key + "' must be a non-empty array");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError("config key '" + key + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::string> texts(const std::string& key) const {
    const Json& v = require(key);
    if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError("config key '" + key + "' must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

 private:
  static void check_keys(const Json& node, const std::string& prefix) {
    for (const auto& [k, v] : node.items()) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      if (v.is_object()) {
        check_keys(v, path);
      } else if (!known_keys().count(path)) {
        throw ConfigError("unknown config key '" + path + "'");
      }
    }
  }

  const Json* find(const std::string& key) const {
    const Json* node = &doc_;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) return nullptr;
      node = &(*node)[part];
      if (dot == std::string::npos) return node;
      start = dot + 1;
    }
  }

  const Json& require(const std::string& key) const {
    const Json* v = find(key);
    if (v == nullptr) throw ConfigError("missing config key '" + key + "'");
    return *v;
  }

  Json doc_;
};

// ---------------------------------------------------------------------------
// Typed readers

/// Model under `prefix`; sigma2 and theta are only required when `full`.
inline CovModel read_model(const Config& c, const std::string& prefix = "model", bool full = true) {
  CovFamily family;
  try {
    family = parse_cov_family(c.text(prefix + ".family"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError("config key '" + prefix + ".family': " + e.what());
  }
  CovModel m;
  m.family = family;
  m.sigma2 = full ? c.positive(prefix + ".sigma2") : 1.0;
  m.theta = full ? c.positive(prefix + ".theta") : 1.0;
  if (family == CovFamily::Exponential) {
    if (c.has(prefix + ".nu") && c.number(prefix + ".nu") != 0.5) {
      throw ConfigError("config key '" + prefix + ".nu' must be 0.5 for the exponential family");
    }
    m.nu = 0.5;
  } else {
    m.nu = c.positive(prefix + ".nu");
  }
  return m;
}

inline TaperSpec read_taper(const Config& c) {
  if (!c.has_section("taper")) return TaperSpec::none();
  TaperFamily family;
  try {
    family = parse_taper_family(c.text("taper.family"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config key 'taper.family': ") + e.what());
  }
  if (family == TaperFamily::None) return TaperSpec::none();
  return {family, c.positive("taper.gamma")};
}

struct DesignSettings {
  DesignKind kind = DesignKind::Regular;
  std::size_t n = 0;
  double jitter = 0.0;
};

inline DesignSettings read_design(const Config& c, bool need_n = true) {
  DesignSettings d;
  try {
    d.kind = parse_design_kind(c.text("design.kind", "regular"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config key 'design.kind': ") + e.what());
  }
  if (need_n) {
    d.n = c.count("design.n");
    if (d.n < 2) throw ConfigError("config key 'design.n' must be at least 2");
  }
  d.jitter = c.number("design.jitter", 0.0);
  if (!(d.jitter >= 0.0 && d.jitter < 0.5)) throw ConfigError("config key 'design.jitter' must lie in [0, 0.5)");
  return d;
}

inline ParamBox read_box(const Config& c) {
  ParamBox b{c.positive("box.a"), c.positive("box.b"), c.positive("box.w"), c.positive("box.v")};
  if (b.a > b.b) throw ConfigError("config keys 'box.a' <= 'box.b' required");
  if (b.w > b.v) throw ConfigError("config keys 'box.w' <= 'box.v' required");
  return b;
}

inline Seed read_seed(const Config& c, bool required) {
  if (!required && !c.has("seed")) return Seed{0};
  return Seed{c.count("seed")};
}

// ---------------------------------------------------------------------------
// JSON helpers

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const CovModel& m) {
  return Json{{"family", to_string(m.family)}, {"sigma2", m.sigma2}, {"theta", m.theta}, {"nu", m.nu}};
}

inline Json to_json(const TaperSpec& t) {
  Json j{{"family", to_string(t.family)}};
  j["gamma"] = t.is_none() ? Json(nullptr) : Json(t.gamma);
  return j;
}

inline Json to_json(const FitResult& r) {
  return Json{{"spec_version", kSpecVersion},
              {"theta_hat", r.theta_hat},
              {"sigma2_hat", r.sigma2_hat},
              {"microergodic", r.microergodic},
              {"loglik", number_or_null(r.loglik)},
              {"tapered", r.tapered},
              {"n", r.n},
              {"converged", r.converged},
              {"evaluations", r.evaluations},
              {"nu", r.nu}};
}

inline Json to_json(const NormalityReport& r) {
  return Json{{"mean", r.mean}, {"var", r.var}, {"var_ratio", r.var_ratio}, {"ks_stat", r.ks_stat}, {"ks_p", r.ks_p}};
}

inline Json to_json(const A3Report& r) {
  return Json{{"satisfied", r.satisfied},
              {"fitted_epsilon", r.fitted_epsilon},
              {"fitted_M", r.fitted_M},
              {"decay_exponent", r.decay_exponent},
              {"threshold", r.threshold}};
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw IoError("write to '" + path + "' failed");
}

/// Writes JSON to `path`, or to `out` when path is empty.
inline void emit_json(const Json& j, const std::string& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

/// Streams used by the commands; tests substitute string streams.
struct Io {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const Config& c) {
  const CovModel model = read_model(c);
  const DesignSettings ds = read_design(c);
  const Seed seed = read_seed(c, true);
  const std::string csv = c.text("output.csv");
  const std::string sidecar = c.text("output.sidecar", csv + ".json");

  const Design design = make_design(ds.kind, ds.n, ds.jitter, seed.derive(0));
  const Dataset data = sample_gp(design, model, seed.derive(1));
  write_csv(csv, data);

  Json side{{"spec_version", kSpecVersion},
            {"command", "simulate"},
            {"family", to_string(model.family)},
            {"sigma2", model.sigma2},
            {"theta", model.theta},
            {"nu", model.nu}};
  const TaperSpec taper = read_taper(c);
  side["taper_family"] = to_string(taper.family);
  side["gamma"] = taper.is_none() ? Json(nullptr) : Json(taper.gamma);
  side["design"] = Json{{"kind", to_string(ds.kind)}, {"n", ds.n}, {"jitter", ds.jitter}};
  side["seed"] = seed.root;
  side["normal_transform"] = kNormalTransform;
  side["sampler"] = "dense-cholesky";
  side["csv"] = csv;
  write_text(sidecar, side.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

inline int cmd_fit(const std::string& dataset_path, const Config& c, Io io = {}) {
  const std::string method = c.text("fit.method");
  const TaperSpec taper = read_taper(c);
  const CovModel family = read_model(c, "model", false);
  std::optional<ParamBox> box;
  double theta1 = 0.0;
  if (method == "joint") {
    if (family.family != CovFamily::Exponential) {
      throw ConfigError("config key 'fit.method': joint estimation requires model.family = exponential");
    }
    box = read_box(c);
  } else if (method == "fixed_theta") {
    theta1 = c.positive("fit.theta1");
  } else {
    throw ConfigError("config key 'fit.method' must be 'joint' or 'fixed_theta'");
  }
  const std::string out_path = c.text("output.json", "");

  const CsvRead in = read_csv(dataset_path);
  if (!in.was_sorted) io.err << "warning: " << dataset_path << ": rows were not sorted by t and have been sorted\n";

  const FitResult r = box ? joint_mle_exponential(in.data, *box, taper)
                          : sigma2_mle_fixed_theta(in.data, theta1, family.nu, taper);
  Json j = to_json(r);
  j["method"] = method;
  j["taper"] = to_json(taper);
  emit_json(j, out_path, io.out);
  return r.converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// mc

struct Acceptance {
  std::optional<double> var_min, var_max, mean_abs_max, ks_p_min;

  bool any() const { return var_min || var_max || mean_abs_max || ks_p_min; }

  bool passes(const NormalityReport& r) const {
    if (var_min && !(r.var >= *var_min)) return false;
    if (var_max && !(r.var <= *var_max)) return false;
    if (mean_abs_max && !(std::fabs(r.mean) <= *mean_abs_max)) return false;
    if (ks_p_min && !(r.ks_p > *ks_p_min)) return false;
    return true;
  }
};

inline McConfig read_mc_config(const Config& c, unsigned threads_flag) {
  McConfig m;
  m.truth = read_model(c);
  m.taper = read_taper(c);
  m.n_list = c.counts("mc.n_list");
  m.replicates = c.count("mc.replicates");
  if (m.replicates < 2) throw ConfigError("config key 'mc.replicates' must be at least 2");
  m.seed = read_seed(c, true);
  const DesignSettings ds = read_design(c, false);
  m.design_kind = ds.kind;
  m.jitter_frac = ds.jitter;
  if (c.has("mc.theta1")) {
    m.working = FixedRange{c.positive("mc.theta1")};
  } else if (c.has_section("box")) {
    if (m.truth.family != CovFamily::Exponential) {
      throw ConfigError("config key 'box': joint estimation requires model.family = exponential");
    }
    m.working = read_box(c);
  } else {
    throw ConfigError("missing config key 'mc.theta1' (or a 'box' section for joint estimation)");
  }
  m.threads = threads_flag > 0 ? threads_flag : static_cast<unsigned>(c.count("mc.threads", 0));
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

inline Acceptance read_acceptance(const Config& c) {
  Acceptance a;
  auto opt = [&](const std::string& k) -> std::optional<double> {
    return c.has(k) ? std::optional<double>(c.number(k)) : std::nullopt;
  };
  a.var_min = opt("mc.acceptance.var_min");
  a.var_max = opt("mc.acceptance.var_max");
  a.mean_abs_max = opt("mc.acceptance.mean_abs_max");
  a.ks_p_min = opt("mc.acceptance.ks_p_min");
  return a;
}

inline Json series_json(const McSeries& s, const Acceptance& acc, bool& all_pass) {
  Json j{{"tapered", s.tapered}, {"count", s.z.size()}, {"failures", s.failures}};
  if (s.z.size() >= 30) {
    j["normality"] = to_json(s.normality);
    if (acc.any()) {
      const bool ok = acc.passes(s.normality);
      j["accepted"] = ok;
      all_pass = all_pass && ok;
    }
  } else {
    j["normality"] = nullptr;
    if (acc.any()) {
      j["accepted"] = false;
      all_pass = false;
    }
  }
  return j;
}

inline int cmd_mc(const Config& c, unsigned threads_flag = 0, Io io = {}) {
  const McConfig cfg = read_mc_config(c, threads_flag);
  const Acceptance acc = read_acceptance(c);
  const std::string json_path = c.text("output.json", "");
  const std::string z_path = c.text("output.z_csv", "");

  const McSummary s = mc_microergodic(cfg);

  Json j{{"spec_version", kSpecVersion}, {"command", "mc"}};
  j["truth"] = to_json(cfg.truth);
  j["taper"] = to_json(cfg.taper);
  if (const auto* box = std::get_if<ParamBox>(&cfg.working)) {
    j["working"] = Json{{"estimator", "joint"}, {"box", {{"a", box->a}, {"b", box->b}, {"w", box->w}, {"v", box->v}}}};
  } else {
    j["working"] = Json{{"estimator", "fixed_theta"}, {"theta1", std::get<FixedRange>(cfg.working).theta1}};
  }
  j["design_kind"] = to_string(cfg.design_kind);
  j["replicates"] = cfg.replicates;
  j["seed"] = cfg.seed.root;
  j["normal_transform"] = kNormalTransform;
  j["target_microergodic"] = s.target_microergodic();
  j["target_var"] = s.target_var();
  if (s.a3) j["a3"] = to_json(*s.a3);
  bool all_pass = true;
  Json points = Json::array();
  for (const McPoint& p : s.points) {
    Json pj{{"n", p.n}};
    pj["exact"] = series_json(p.exact, acc, all_pass);
    if (p.tapered) pj["tapered"] = series_json(*p.tapered, acc, all_pass);
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  if (acc.any()) {
    Json a = Json::object();
    if (acc.var_min) a["var_min"] = *acc.var_min;
    if (acc.var_max) a["var_max"] = *acc.var_max;
    if (acc.mean_abs_max) a["mean_abs_max"] = *acc.mean_abs_max;
    if (acc.ks_p_min) a["ks_p_min"] = *acc.ks_p_min;
    a["passed"] = all_pass;
    j["acceptance"] = std::move(a);
  }
  j["runtime_seconds"] = s.runtime_seconds;
  emit_json(j, json_path, io.out);

  if (!z_path.empty()) {
    std::ostringstream z;
    z << "n,replicate,z,tapered\n";
    for (const McPoint& p : s.points) {
      auto rows = [&](const McSeries& series) {
        for (std::size_t i = 0; i < series.z.size(); ++i) {
          z << p.n << ',' << series.replicate[i] << ',' << format_double(series.z[i]) << ','
            << (series.tapered ? 1 : 0) << '\n';
        }
      };
      rows(p.exact);
      if (p.tapered) rows(*p.tapered);
    }
    write_text(z_path, z.str());
  }
  return all_pass ? kExitOk : kExitAcceptance;
}

// ---------------------------------------------------------------------------
// diag

inline int cmd_diag(const Config& c, Io io = {}) {
  const std::vector<std::string> all{"a3", "lemma4", "det_ratio", "theorem3"};
  const bool explicit_checks = c.has("diag.checks");
  const std::vector<std::string> checks = explicit_checks ? c.texts("diag.checks") : all;
  for (const auto& name : checks) {
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      throw ConfigError("config key 'diag.checks': unknown diagnostic '" + name + "'");
    }
  }
  auto wanted = [&](const std::string& name) { return std::find(checks.begin(), checks.end(), name) != checks.end(); };

  const CovModel model = read_model(c);
  const TaperSpec taper = read_taper(c);
  const double lambda_max = c.number("diag.lambda_max", 1000.0);
  if (!(lambda_max > 10.0)) throw ConfigError("config key 'diag.lambda_max' must exceed 10");
  std::vector<double> grid = c.has("diag.lemma4_grid") ? c.numbers("diag.lemma4_grid") : log_spaced(50.0, 800.0, 8);
  for (double g : grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("config key 'diag.lemma4_grid' must hold positive values");
  }
  std::optional<DesignSettings> ds;
  if (wanted("det_ratio") || wanted("theorem3")) ds = read_design(c);
  std::optional<CovModel> reference;
  if (c.has_section("diag") && c.has("diag.reference.family")) reference = read_model(c, "diag.reference");
  const std::string out_path = c.text("output.json", "");
  const Seed seed = read_seed(c, false);
  std::optional<Design> design;
  if (ds) design = make_design(ds->kind, ds->n, ds->jitter, seed.derive(0));

  Json j{{"spec_version", kSpecVersion}, {"command", "diag"}};
  j["model"] = to_json(model);
  j["taper"] = to_json(taper);
  Json results = Json::object();
  bool errored = false;

  auto run = [&](const std::string& name, auto&& body) {
    if (!wanted(name)) return;
    try {
      results[name] = body();
    } catch (const Error& e) {
      results[name] = Json{{"status", "error"}, {"message", e.what()}};
      errored = true;
    }
  };
  auto skipped = [](const std::string& reason) { return Json{{"status", "skipped"}, {"reason", reason}}; };
  auto verdict = [](bool pass) { return pass ? "pass" : "fail"; };

  run("a3", [&]() -> Json {
    if (taper.is_none()) return skipped("no taper configured");
    const A3Report r = check_a3(taper, model.nu, lambda_max);
    Json out = to_json(r);
    out["status"] = verdict(r.satisfied);
    return out;
  });
  run("lemma4", [&]() -> Json {
    if (taper.is_none()) return skipped("no taper configured");
    const auto ratio = lemma4_ratio(model, taper, grid);
    const double r = fit_decay_exponent(grid, ratio);
    Json out{{"lambda", grid}, {"ratio", ratio}, {"decay_exponent", r}};
    out["status"] = verdict(r > 1.0);
    return out;
  });
  run("det_ratio", [&]() -> Json {
    const DetRatio d = det_ratio_check(*design, model, taper);
    return Json{{"ratio", number_or_null(d.ratio)}, {"passes", d.passes}, {"status", verdict(d.passes)}};
  });
  run("theorem3", [&]() -> Json {
    if (!reference) {
      if (explicit_checks) throw ConfigError("missing config key 'diag.reference.family' for theorem3");
      return skipped("no diag.reference model configured");
    }
    const double g = trace_gap_theorem3(*design, model, *reference);
    Json out{{"reference", to_json(*reference)}, {"n", design->size()}, {"trace_gap", g}};
    out["status"] = verdict(std::isfinite(g));
    return out;
  });

  j["diagnostics"] = std::move(results);
  emit_json(j, out_path, io.out);
  return errored ? kExitNumerical : kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchRow {
  std::size_t n = 0;
  std::size_t bandwidth = 0;
  double dense_seconds = 0.0;
  double banded_seconds = 0.0;
  double loglik_dense = 0.0;
  double loglik_banded = 0.0;

  double speedup() const { return dense_seconds / banded_seconds; }
};

/// Median wall-clock times of dense and banded tapered log-likelihood
/// evaluation (assembly plus factorization) on the regular design.
inline BenchRow bench_one(const CovModel& model, const TaperSpec& taper, std::size_t n, std::size_t runs, Seed seed) {
  if (taper.is_none()) throw InvalidArgument("benchmarking needs a taper; the untapered matrix has no sparsity");
  const Design design = regular_design(n);
  const Dataset data = model.family == CovFamily::Exponential
                           ? sample_ou_markov(design, model.theta, model.sigma2, seed)
                           : sample_gp(design, model, seed);
  BenchRow row;
  row.n = n;
  row.bandwidth = support_bandwidth(design, taper.support());
  std::vector<double> dense_t, banded_t;
  for (std::size_t r = 0; r < runs; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    row.loglik_dense = tapered_loglik(data, model, taper, SolverPath::Dense).value;
    auto t1 = std::chrono::steady_clock::now();
    row.loglik_banded = tapered_loglik(data, model, taper, SolverPath::Banded).value;
    auto t2 = std::chrono::steady_clock::now();
    dense_t.push_back(std::chrono::duration<double>(t1 - t0).count());
    banded_t.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  row.dense_seconds = median(dense_t);
  row.banded_seconds = median(banded_t);
  return row;
}

inline int cmd_bench(const Config& c, Io io = {}) {
  const CovModel model = read_model(c);
  const TaperSpec taper = read_taper(c);
  if (taper.is_none()) throw ConfigError("config key 'taper.family': bench requires a taper (none has no sparsity)");
  const std::vector<std::size_t> ns = c.counts("bench.n_list");
  for (std::size_t n : ns) {
    if (n < 2) throw ConfigError("config key 'bench.n_list' entries must be at least 2");
  }
  const std::size_t runs = c.count("bench.runs", 5);
  if (runs < 5) throw ConfigError("config key 'bench.runs' must be at least 5");
  const Seed seed = read_seed(c, false);
  const std::string out_path = c.text("output.json", "");

  Json j{{"spec_version", kSpecVersion}, {"command", "bench"}};
  j["model"] = to_json(model);
  j["taper"] = to_json(taper);
  j["runs"] = runs;
  Json rows = Json::array();
  for (std::size_t n : ns) {
    const BenchRow r = bench_one(model, taper, n, runs, seed.derive(n));
    rows.push_back(Json{{"n", r.n},
                        {"bandwidth", r.bandwidth},
                        {"dense_median_seconds", r.dense_seconds},
                        {"banded_median_seconds", r.banded_seconds},
                        {"speedup", r.speedup()},
                        {"loglik_dense", number_or_null(r.loglik_dense)},
                        {"loglik_banded", number_or_null(r.loglik_banded)}});
  }
  j["results"] = std::move(rows);
  emit_json(j, out_path, io.out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

/// Maps an exception escaping a command to its exit code and prints the message.
inline int exit_code_for(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (dynamic_cast<const ConvergenceError*>(&e)) return kExitNoConvergence;
  if (dynamic_cast<const FactorizationError*>(&e) || dynamic_cast<const QuadratureError*>(&e)) {
    return kExitNumerical;
  }
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const IoError*>(&e)) return kExitConfig;
  return kExitNumerical;
}

}  // namespace taper_mle::cli
