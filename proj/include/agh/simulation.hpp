#pragma once

// Replicate studies: generate populations and datasets, fit each scenario,
// summarise Mean / S.D. / RMSE / S.E. per parameter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/approximation.hpp"
#include "agh/config.hpp"
#include "agh/errors.hpp"
#include "agh/estimator.hpp"
#include "agh/io.hpp"
#include "agh/model.hpp"
#include "agh/numeric.hpp"

namespace agh {

/// Log-normal generation recipe for free loadings and intercepts.
struct Recipe {
  double mu = -0.3;
  double sigma = 0.5;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (seed, stream, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

namespace detail {

/// N(0,1) by Box-Muller from 53-bit uniforms, so draws do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

inline Theta generate_truth(const ModelSpec& spec, const Recipe& recipe, std::uint64_t seed) {
  if (!(recipe.sigma >= 0.0) || !std::isfinite(recipe.mu))
    throw InvalidArgument("recipe: need finite mu and sigma >= 0");
  detail::Rng rng(seed);
  Theta t(spec);
  for (int j = 0; j < spec.p(); ++j) t.intercepts()[j] = std::exp(recipe.mu + recipe.sigma * rng.normal());
  for (int j = 0; j < spec.p(); ++j)
    for (int d = 0; d < spec.q(); ++d)
      if (spec.is_free(j, d)) t.loadings()(j, d) = std::exp(recipe.mu + recipe.sigma * rng.normal());
  return t;
}

inline Dataset generate_dataset(const Theta& truth, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("generate_dataset: n must be positive");
  detail::Rng rng(seed);
  const BinaryItems items(truth);
  RowMatrix y(static_cast<Eigen::Index>(n), truth.p());
  Eigen::VectorXd z(truth.q());
  for (std::size_t l = 0; l < n; ++l) {
    for (int d = 0; d < truth.q(); ++d) z[d] = rng.normal();
    const Eigen::VectorXd e = items.eta(z);
    for (int j = 0; j < truth.p(); ++j)
      y(static_cast<Eigen::Index>(l), j) = rng.uniform() < sigmoid(e[j]) ? 1.0 : 0.0;
  }
  return Dataset(std::move(y));
}

struct Scenario {
  Method method;
  std::size_t n;

  std::string label() const { return method.name() + "@" + std::to_string(n); }
};

inline Scenario parse_scenario(const std::string& token) {
  const auto at = token.find('@');
  if (at == std::string::npos) throw InvalidArgument("scenario '" + token + "': expected method@n");
  const std::string n = token.substr(at + 1);
  if (n.empty() || !std::all_of(n.begin(), n.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw InvalidArgument("scenario '" + token + "': bad sample size");
  return {Method::parse(token.substr(0, at)), static_cast<std::size_t>(std::stoull(n))};
}

struct StudyConfig {
  std::string name = "custom";
  Theta truth{ModelSpec::echelon(1, 1)};
  std::vector<Scenario> scenarios;
  int replicates = 1;
  std::uint64_t seed = 0;
  FitOptions fit{};

  const ModelSpec& spec() const { return truth.spec(); }

  void validate() const {
    if (scenarios.empty()) throw InvalidArgument("study: method list is empty");
    if (replicates < 1) throw InvalidArgument("study: replicates must be >= 1");
    for (const auto& s : scenarios)
      if (s.n == 0) throw InvalidArgument("study: sample size must be positive");
    fit.validate();
  }
};

inline std::vector<Scenario> cross(const std::vector<Method>& methods,
                                   const std::vector<std::size_t>& ns) {
  std::vector<Scenario> out;
  for (std::size_t n : ns)
    for (const auto& m : methods) out.push_back({m, n});
  return out;
}

inline Theta table1_truth() {
  Eigen::MatrixXd a(6, 3);
  a << 1.01, 0.00, 0.00,
       0.91, 0.83, 0.00,
       0.50, 0.44, 1.45,
       0.74, 0.88, 1.05,
       1.16, 1.73, 0.62,
       1.22, 1.46, 0.91;
  return Theta(ModelSpec::echelon(6, 3), Eigen::VectorXd::Zero(6), a);
}

inline Theta table2_truth() {
  Eigen::MatrixXd a(10, 5);
  a << 1.01, 0.00, 0.00, 0.00, 0.00,
       0.91, 1.46, 0.00, 0.00, 0.00,
       0.50, 0.89, 0.71, 0.00, 0.00,
       0.74, 1.64, 0.35, 1.10, 0.00,
       1.16, 1.45, 0.53, 0.50, 0.62,
       1.22, 1.05, 0.83, 0.49, 0.99,
       0.55, 0.62, 0.71, 1.20, 1.12,
       0.83, 0.91, 0.65, 0.41, 0.86,
       0.44, 1.59, 0.95, 0.85, 0.71,
       0.88, 1.27, 0.88, 0.72, 1.39;
  return Theta(ModelSpec::echelon(10, 5), Eigen::VectorXd::Zero(10), a);
}

inline std::vector<std::string> preset_names() { return {"table1", "table2", "table3"}; }

/// Study designs of the published tables (100 replicates each).
inline StudyConfig preset(const std::string& name, std::uint64_t seed) {
  StudyConfig c;
  c.name = name;
  c.seed = seed;
  c.replicates = 100;
  if (name == "table1") {
    c.truth = table1_truth();
    c.scenarios = cross({Method::agh(5), Method::laplace2()}, {200});
  } else if (name == "table2") {
    c.truth = table2_truth();
    c.scenarios = cross({Method::agh(3), Method::laplace2()}, {200});
  } else if (name == "table3") {
    c.truth = table1_truth();
    c.scenarios = {{Method::agh(5), 200}, {Method::agh(5), 1000}, {Method::agh(9), 200},
                   {Method::agh(15), 200}};
  } else {
    std::string list;
    for (const auto& p : preset_names()) list += (list.empty() ? "" : ", ") + p;
    throw InputError("unknown preset '" + name + "'; available presets: " + list);
  }
  return c;
}

/// Study config file. Keys:
///   seed (required), preset, p, q, mask, loadings, intercepts, recipe_mu,
///   recipe_sigma, n, replicates, methods, k, scenarios, score_tol,
///   param_tol, max_outer.
/// With a preset the remaining keys override it; without one, p and q are
/// required and the truth is either `loadings` (rows ';') or drawn from the recipe.
inline StudyConfig study_from_config(const KeyValueConfig& cfg) {
  static const std::vector<std::string> known = {
      "seed", "preset", "p", "q", "mask", "loadings", "intercepts", "recipe_mu", "recipe_sigma",
      "n", "replicates", "methods", "k", "scenarios", "score_tol", "param_tol", "max_outer"};
  for (const auto& key : cfg.keys())
    if (std::find(known.begin(), known.end(), key) == known.end()) cfg.fail(key, "unknown field");

  const std::uint64_t seed = cfg.u64("seed");
  StudyConfig c;
  if (cfg.has("preset")) {
    c = preset(cfg.str("preset"), seed);
  } else {
    const long long p = cfg.integer("p");
    if (p < 1) cfg.fail("p", "must be >= 1");
    const ModelSpec spec = spec_from_config(cfg, static_cast<int>(p));
    if (cfg.has("loadings")) {
      const Eigen::MatrixXd a = cfg.matrix("loadings");
      if (a.rows() != spec.p() || a.cols() != spec.q())
        cfg.fail("loadings", "expected a " + std::to_string(spec.p()) + " x " +
                                 std::to_string(spec.q()) + " matrix");
      c.truth = Theta(spec, Eigen::VectorXd::Zero(spec.p()), a);
    } else {
      Recipe r;
      if (cfg.has("recipe_mu")) r.mu = cfg.real("recipe_mu");
      if (cfg.has("recipe_sigma")) r.sigma = cfg.real("recipe_sigma");
      if (!(r.sigma >= 0.0)) cfg.fail("recipe_sigma", "must be >= 0");
      c.truth = generate_truth(spec, r, derive_seed(seed, 0, 0));
    }
    c.name = "custom";
    c.seed = seed;
  }
  if (cfg.has("intercepts")) {
    const auto v = cfg.real_list("intercepts");
    if (static_cast<int>(v.size()) != c.truth.p())
      cfg.fail("intercepts", "expected " + std::to_string(c.truth.p()) + " values");
    for (int j = 0; j < c.truth.p(); ++j) c.truth.intercepts()[j] = v[static_cast<std::size_t>(j)];
  }
  if (cfg.has("replicates")) {
    const long long r = cfg.integer("replicates");
    if (r < 1) cfg.fail("replicates", "must be >= 1");
    c.replicates = static_cast<int>(r);
  }

  if (cfg.has("scenarios")) {
    c.scenarios.clear();
    for (const auto& tok : cfg.list("scenarios")) {
      try {
        c.scenarios.push_back(parse_scenario(tok));
      } catch (const InvalidArgument& e) {
        cfg.fail("scenarios", e.what());
      }
    }
  } else if (cfg.has("methods") || cfg.has("n") || cfg.has("k")) {
    std::vector<Method> methods;
    std::vector<std::size_t> ns;
    for (const auto& s : c.scenarios) {
      if (std::none_of(methods.begin(), methods.end(),
                       [&](const Method& m) { return m.name() == s.method.name(); }))
        methods.push_back(s.method);
      if (std::find(ns.begin(), ns.end(), s.n) == ns.end()) ns.push_back(s.n);
    }
    if (cfg.has("methods")) {
      methods.clear();
      std::vector<long long> ks;
      if (cfg.has("k")) ks = cfg.integer_list("k");
      for (const auto& tok : cfg.list("methods")) {
        try {
          if (tok == "agh") {
            if (ks.empty()) cfg.fail("methods", "'agh' needs a k list");
            for (long long k : ks) methods.push_back(Method::agh(static_cast<int>(k)));
          } else {
            methods.push_back(Method::parse(tok));
          }
        } catch (const InvalidArgument& e) {
          cfg.fail("methods", e.what());
        }
      }
    } else if (cfg.has("k")) {
      std::vector<Method> rest;
      for (const auto& m : methods)
        if (!m.is_agh()) rest.push_back(m);
      std::vector<Method> with_k;
      for (long long k : cfg.integer_list("k")) {
        try {
          with_k.push_back(Method::agh(static_cast<int>(k)));
        } catch (const InvalidArgument& e) {
          cfg.fail("k", e.what());
        }
      }
      with_k.insert(with_k.end(), rest.begin(), rest.end());
      methods = std::move(with_k);
    }
    if (cfg.has("n")) {
      ns.clear();
      for (long long n : cfg.integer_list("n")) {
        if (n < 1) cfg.fail("n", "sample sizes must be positive");
        ns.push_back(static_cast<std::size_t>(n));
      }
    }
    c.scenarios = cross(methods, ns);
  }

  if (cfg.has("score_tol")) c.fit.score_tol = cfg.real("score_tol");
  if (cfg.has("param_tol")) c.fit.param_tol = cfg.real("param_tol");
  if (cfg.has("max_outer")) c.fit.max_outer = static_cast<int>(cfg.integer("max_outer"));
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(std::string("study config: ") + e.what());
  }
  return c;
}

/// One displayed parameter: every intercept, then all p x q loadings factor by factor.
struct ParameterRow {
  std::string name;
  double truth = 0.0;
  bool masked = false;
  double mean = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double se = 0.0;
};

struct ReplicateRecord {
  int replicate = 0;
  bool converged = false;
  int iterations = 0;
  double seconds = 0.0;
  Eigen::VectorXd estimates;  // flatten() order
  Eigen::VectorXd std_errors;
};

struct ScenarioReport {
  Scenario scenario{Method::agh(5), 0};
  std::vector<ParameterRow> rows;
  std::vector<ReplicateRecord> replicates;
  int converged = 0;
  int nonconverged = 0;
  double avg_iterations = 0.0;
  double avg_minutes = 0.0;  // wall clock; hardware dependent
};

struct SimulationReport {
  std::string name;
  std::vector<std::string> parameter_names;  // flatten() order
  std::vector<ScenarioReport> scenarios;
};

struct Statistics {
  double mean, sd, rmse;
};

/// Mean, S.D. (R - 1 denominator, 0 when R = 1) and RMSE about `truth`.
inline Statistics replicate_statistics(const std::vector<double>& xs, double truth) {
  if (xs.empty()) throw InvalidArgument("replicate_statistics: no values");
  const double r = static_cast<double>(xs.size());
  KahanSum s;
  for (double x : xs) s.add(x);
  const double mean = s.value() / r;
  KahanSum ss, se;
  for (double x : xs) {
    ss.add((x - mean) * (x - mean));
    se.add((x - truth) * (x - truth));
  }
  const double sd = xs.size() > 1 ? std::sqrt(ss.value() / (r - 1.0)) : 0.0;
  return {mean, sd, std::sqrt(se.value() / r)};
}

/// Raised after a study in which some scenario had no convergent replicate.
/// Carries the full report; those scenarios have NaN statistics.
class StudyFailure : public Error {
 public:
  StudyFailure(SimulationReport report, const std::vector<std::string>& scenarios)
      : Error(message(scenarios)), report_(std::move(report)), scenarios_(scenarios) {}

  const SimulationReport& report() const noexcept { return report_; }
  const std::vector<std::string>& scenarios() const noexcept { return scenarios_; }

 private:
  static std::string message(const std::vector<std::string>& scenarios) {
    std::string m = "study: every replicate failed to converge in";
    for (std::size_t i = 0; i < scenarios.size(); ++i) m += (i ? ", " : " ") + scenarios[i];
    return m;
  }

  SimulationReport report_;
  std::vector<std::string> scenarios_;
};

using Estimator = std::function<FitResult(const Dataset&, const ModelSpec&, const FitOptions&)>;

inline FitResult default_estimator(const Dataset& d, const ModelSpec& s, const FitOptions& o) {
  return fit(d, s, o);
}

/// Runs every scenario on `replicates` datasets. The dataset of replicate r
/// at sample size n is shared across methods. Non-convergent replicates are
/// left out of the statistics and counted.
inline SimulationReport run_study(const StudyConfig& config, const Estimator& estimator = default_estimator) {
  config.validate();
  const ModelSpec& spec = config.spec();
  const Theta& truth = config.truth;
  const Eigen::VectorXd x_true = truth.flatten();

  SimulationReport rep;
  rep.name = config.name;
  rep.parameter_names = Theta::parameter_names(spec);

  std::vector<int> loading_index(static_cast<std::size_t>(spec.p() * spec.q()), -1);
  {
    int i = spec.p();
    for (int j = 0; j < spec.p(); ++j)
      for (int d = 0; d < spec.q(); ++d)
        if (spec.is_free(j, d)) loading_index[static_cast<std::size_t>(j * spec.q() + d)] = i++;
  }

  std::vector<std::string> failed;
  for (const Scenario& sc : config.scenarios) {
    ScenarioReport sr;
    sr.scenario = sc;
    FitOptions fo = config.fit;
    fo.method = sc.method;
    for (int r = 0; r < config.replicates; ++r) {
      const Dataset data =
          generate_dataset(truth, sc.n, derive_seed(config.seed, sc.n, static_cast<std::uint64_t>(r)));
      ReplicateRecord rec;
      rec.replicate = r;
      try {
        const FitResult f = estimator(data, spec, fo);
        rec.converged = f.converged;
        rec.iterations = f.iterations;
        rec.seconds = f.elapsed_seconds;
        rec.estimates = f.theta_hat.flatten();
        rec.std_errors = f.std_errors;
      } catch (const Error&) {
        rec.converged = false;
      }
      sr.replicates.push_back(std::move(rec));
    }

    std::vector<const ReplicateRecord*> ok;
    for (const auto& rec : sr.replicates)
      if (rec.converged) ok.push_back(&rec);
    sr.converged = static_cast<int>(ok.size());
    sr.nonconverged = config.replicates - sr.converged;
    if (ok.empty()) failed.push_back(sc.label());

    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    KahanSum it, sec;
    for (const auto* rec : ok) {
      it.add(rec->iterations);
      sec.add(rec->seconds);
    }
    sr.avg_iterations = ok.empty() ? nan : it.value() / static_cast<double>(ok.size());
    sr.avg_minutes = ok.empty() ? nan : sec.value() / static_cast<double>(ok.size()) / 60.0;

    const auto summarise = [&](const std::string& name, int idx, double tv) {
      ParameterRow row;
      row.name = name;
      row.truth = tv;
      if (idx < 0) {
        row.masked = true;
        return row;
      }
      if (ok.empty()) {
        row.mean = row.sd = row.rmse = row.se = nan;
        return row;
      }
      std::vector<double> xs;
      KahanSum se;
      int se_count = 0;
      for (const auto* rec : ok) {
        xs.push_back(rec->estimates[idx]);
        if (std::isfinite(rec->std_errors[idx])) {
          se.add(rec->std_errors[idx]);
          ++se_count;
        }
      }
      const Statistics st = replicate_statistics(xs, tv);
      row.mean = st.mean;
      row.sd = st.sd;
      row.rmse = st.rmse;
      row.se = se_count ? se.value() / se_count : std::numeric_limits<double>::quiet_NaN();
      return row;
    };
    for (int j = 0; j < spec.p(); ++j)
      sr.rows.push_back(summarise(rep.parameter_names[static_cast<std::size_t>(j)], j, x_true[j]));
    for (int d = 0; d < spec.q(); ++d)
      for (int j = 0; j < spec.p(); ++j)
        sr.rows.push_back(summarise("a_" + std::to_string(j + 1) + "_" + std::to_string(d + 1),
                                    loading_index[static_cast<std::size_t>(j * spec.q() + d)],
                                    truth.loadings()(j, d)));
    rep.scenarios.push_back(std::move(sr));
  }
  if (!failed.empty()) throw StudyFailure(std::move(rep), failed);
  return rep;
}

enum class TableFormat { Text, Csv };

namespace detail {

inline std::string fixed2(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

}  // namespace detail

inline std::string render_table(const SimulationReport& rep, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    out << "scenario,method,n,parameter,true,mean,sd,rmse,se\n";
    for (const auto& sr : rep.scenarios)
      for (const auto& row : sr.rows) {
        out << sr.scenario.label() << ',' << sr.scenario.method.name() << ',' << sr.scenario.n
            << ',' << row.name << ',' << format_g17(row.truth);
        if (row.masked)
          out << ",-,-,-,-\n";
        else
          out << ',' << format_g17(row.mean) << ',' << format_g17(row.sd) << ','
              << format_g17(row.rmse) << ',' << format_g17(row.se) << '\n';
      }
    return out.str();
  }
  for (const auto& sr : rep.scenarios) {
    out << rep.name << ": " << sr.scenario.method.name() << ", n = " << sr.scenario.n << ", "
        << sr.converged << " of " << sr.converged + sr.nonconverged << " replicates converged\n";
    out << detail::pad("", 10) << detail::pad("True", 8) << detail::pad("Mean", 8)
        << detail::pad("S.D.", 8) << detail::pad("RMSE", 8) << detail::pad("S.E.", 8) << '\n';
    for (const auto& row : sr.rows) {
      out << std::string(row.name) + std::string(row.name.size() < 10 ? 10 - row.name.size() : 1, ' ')
          << detail::pad(detail::fixed2(row.truth), 8);
      if (row.masked)
        out << detail::pad("-", 8) << detail::pad("-", 8) << detail::pad("-", 8) << detail::pad("-", 8);
      else
        out << detail::pad(detail::fixed2(row.mean), 8) << detail::pad(detail::fixed2(row.sd), 8)
            << detail::pad(detail::fixed2(row.rmse), 8) << detail::pad(detail::fixed2(row.se), 8);
      out << '\n';
    }
    out << "Avg iter " << detail::fixed2(sr.avg_iterations) << "   Avg min "
        << detail::fixed2(sr.avg_minutes) << " (wall clock, hardware dependent)\n\n";
  }
  return out.str();
}

struct TableCsvRow {
  std::string scenario, method;
  std::size_t n = 0;
  ParameterRow row;
};

/// Reads the CSV produced by render_table.
inline std::vector<TableCsvRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "scenario,method,n,parameter,true,mean,sd,rmse,se")
    throw InputError("report csv: bad header");
  std::vector<TableCsvRow> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 9) throw InputError("report csv: malformed row '" + line + "'");
    TableCsvRow r;
    r.scenario = c[0];
    r.method = c[1];
    r.n = static_cast<std::size_t>(std::stoull(c[2]));
    r.row.name = c[3];
    r.row.truth = parse_g17(c[4]);
    r.row.masked = c[5] == "-";
    if (!r.row.masked) {
      r.row.mean = parse_g17(c[5]);
      r.row.sd = parse_g17(c[6]);
      r.row.rmse = parse_g17(c[7]);
      r.row.se = parse_g17(c[8]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string render_summary_csv(const SimulationReport& rep) {
  std::ostringstream out;
  out << "scenario,method,n,replicates,converged,nonconverged,avg_iterations\n";
  for (const auto& sr : rep.scenarios)
    out << sr.scenario.label() << ',' << sr.scenario.method.name() << ',' << sr.scenario.n << ','
        << sr.converged + sr.nonconverged << ',' << sr.converged << ',' << sr.nonconverged << ','
        << format_g17(sr.avg_iterations) << '\n';
  return out.str();
}

/// Wall-clock times; kept apart from the deterministic outputs.
inline std::string render_timing_csv(const SimulationReport& rep) {
  std::ostringstream out;
  out << "scenario,avg_minutes\n";
  for (const auto& sr : rep.scenarios)
    out << sr.scenario.label() << ',' << format_g17(sr.avg_minutes) << '\n';
  return out.str();
}

/// One line per scenario, replicate and parameter.
inline std::string render_raw_csv(const SimulationReport& rep) {
  std::ostringstream out;
  out << "scenario,replicate,converged,iterations,parameter,estimate,se\n";
  for (const auto& sr : rep.scenarios)
    for (const auto& rec : sr.replicates)
      for (std::size_t i = 0; i < rep.parameter_names.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const bool have = rec.estimates.size() > ii;
        out << sr.scenario.label() << ',' << rec.replicate << ',' << (rec.converged ? 1 : 0) << ','
            << rec.iterations << ',' << rep.parameter_names[i] << ','
            << (have ? format_g17(rec.estimates[ii]) : std::string("nan")) << ','
            << (have && rec.std_errors.size() > ii ? format_g17(rec.std_errors[ii])
                                                   : std::string("nan"))
            << '\n';
      }
  return out.str();
}

}  // namespace agh
