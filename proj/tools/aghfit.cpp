// aghfit: fit binary latent variable models, run simulation studies, inspect
// quadrature rules and compare approximation methods.
//
// Exit codes: 0 success, 1 usage or input error, 2 a fit (or every replicate
// of a study scenario) did not converge; outputs are still written.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "agh/io.hpp"
#include "agh/simulation.hpp"

namespace fs = std::filesystem;
using namespace agh;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return format_g17(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Method resolve_method(const std::string& name, int k) {
  if (name == "agh") return Method::agh(k);
  return Method::parse(name);
}

struct Problem {
  LabelledData data;
  ModelSpec spec;
};

Problem load_problem(const std::string& data_path, const std::string& spec_path) {
  LabelledData d = load_data_csv(data_path);
  const KeyValueConfig cfg = KeyValueConfig::load(spec_path);
  ModelSpec spec = spec_from_config(cfg, static_cast<int>(d.data.p()));
  return {std::move(d), std::move(spec)};
}

std::string fit_summary(const FitResult& r, const Method& m, const Problem& pr) {
  std::ostringstream out;
  out << "method      " << m.name() << "\n"
      << "subjects    " << pr.data.data.n() << "\n"
      << "items       " << pr.spec.p() << "\n"
      << "factors     " << pr.spec.q() << "\n"
      << "converged   " << (r.converged ? "yes" : "no") << "\n"
      << "iterations  " << r.iterations << "\n"
      << "loglik      " << fixed(r.loglik, 4) << "\n"
      << "max |score| " << format_g17(r.score_norm) << "\n"
      << "seconds     " << fixed(r.elapsed_seconds, 2) << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  if (r.covariance_indefinite) out << "warning: sandwich covariance is not positive definite\n";
  out << "\nparameter   estimate        se\n";
  const auto names = Theta::parameter_names(r.theta_hat.spec());
  const Eigen::VectorXd x = r.theta_hat.flatten();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::string name = names[i];
    name.resize(std::max<std::size_t>(name.size(), 10), ' ');
    std::string est = fixed(x[ii], 4);
    est.resize(std::max<std::size_t>(est.size(), 14), ' ');
    out << name << "  " << est << "  " << fixed(r.std_errors[ii], 4) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data, spec, method = "agh", out;
  int k = 5;
  double tol = 1e-5;
  int max_iter = 500;
};

int cmd_fit(const FitArgs& a) {
  const Problem pr = load_problem(a.data, a.spec);
  FitOptions opt;
  opt.method = resolve_method(a.method, a.k);
  opt.score_tol = a.tol;
  opt.max_outer = a.max_iter;
  const FitResult r = fit(pr.data.data, pr.spec, opt);
  const std::string csv = estimates_to_csv(r);
  const std::string summary = fit_summary(r, opt.method, pr);
  if (a.out.empty()) {
    std::cerr << summary;
    std::cout << csv;
  } else {
    write_file(a.out, csv);
    std::cout << summary;
  }
  return r.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string data, spec, methods = "agh5,laplace2";
  double tol = 1e-5;
};

int cmd_compare(const CompareArgs& a) {
  const Problem pr = load_problem(a.data, a.spec);
  std::vector<Method> methods;
  for (const auto& tok : split(a.methods, ',')) {
    if (tok.empty()) throw InputError("--methods: empty entry");
    methods.push_back(Method::parse(tok));
  }
  if (methods.empty()) throw InputError("--methods: no methods given");

  std::vector<FitResult> fits;
  bool all_converged = true;
  for (const auto& m : methods) {
    FitOptions opt;
    opt.method = m;
    opt.score_tol = a.tol;
    fits.push_back(fit(pr.data.data, pr.spec, opt));
    all_converged = all_converged && fits.back().converged;
  }
  if (methods.size() == 1) {
    std::cout << fit_summary(fits[0], methods[0], pr);
    return all_converged ? kOk : kNotConverged;
  }

  const auto cell = [](const std::string& s) {
    std::string c = s;
    c.resize(std::max<std::size_t>(c.size(), 14), ' ');
    return c;
  };
  std::ostringstream out;
  out << cell("parameter");
  for (const auto& m : methods) out << cell(m.name());
  out << "\n";
  const auto names = Theta::parameter_names(pr.spec);
  std::vector<Eigen::VectorXd> xs;
  for (const auto& f : fits) xs.push_back(f.theta_hat.flatten());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << cell(names[i]);
    for (const auto& x : xs) out << cell(fixed(x[static_cast<Eigen::Index>(i)], 4));
    out << "\n";
  }
  out << cell("loglik");
  for (const auto& f : fits) out << cell(fixed(f.loglik, 4));
  out << "\n" << cell("iterations");
  for (const auto& f : fits) out << cell(std::to_string(f.iterations));
  out << "\n" << cell("seconds");
  for (const auto& f : fits) out << cell(fixed(f.elapsed_seconds, 2));
  out << "\n" << cell("converged");
  for (const auto& f : fits) out << cell(f.converged ? "yes" : "no");
  out << "\n";
  double max_diff = 0.0;
  for (std::size_t m = 1; m < xs.size(); ++m)
    max_diff = std::max(max_diff, (xs[m] - xs[0]).lpNorm<Eigen::Infinity>());
  out << "max |dtheta| " << fixed(max_diff, 6) << "\n";
  std::cout << out.str();
  return all_converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// quadcheck

struct QuadArgs {
  int k = 0;
  int q = 1;
  std::string mode, psi;
};

int cmd_quadcheck(const QuadArgs& a) {
  const HermiteRule rule = hermite_rule(a.k);
  Eigen::VectorXd mode = Eigen::VectorXd::Zero(a.q);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(a.q, a.q);
  KeyValueConfig cfg = KeyValueConfig::parse("", "quadcheck");
  if (!a.mode.empty()) {
    cfg.set("mode", a.mode);
    const auto v = cfg.real_list("mode");
    if (static_cast<int>(v.size()) != a.q) throw InputError("--mode: expected " + std::to_string(a.q) + " values");
    mode = Eigen::Map<const Eigen::VectorXd>(v.data(), a.q);
  }
  if (!a.psi.empty()) {
    cfg.set("psi", a.psi);
    psi = cfg.matrix("psi");
    if (psi.rows() != a.q || psi.cols() != a.q)
      throw InputError("--psi: expected a " + std::to_string(a.q) + "x" + std::to_string(a.q) + " matrix");
  }
  const AdaptedRule adapted = adapt(rule, mode, psi);

  std::cout << "index,node,weight\n";
  for (int i = 0; i < rule.k(); ++i)
    std::cout << i + 1 << "," << format_g17(rule.nodes()[i]) << "," << format_g17(rule.weights()[i]) << "\n";

  // Moments of N(mode, psi) under the adapted rule. Degree m in each
  // coordinate is exact when m <= 2k - 1.
  const Eigen::MatrixXd& t = adapted.cholesky();
  const double log_norm = -0.5 * a.q * std::log(2.0 * std::numbers::pi) - std::log(t.diagonal().prod());
  const auto density = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd u = t.triangularView<Eigen::Lower>().solve(z - mode);
    return std::exp(log_norm - 0.5 * u.squaredNorm());
  };
  struct Check {
    std::string name;
    int degree;
    double got, want;
  };
  std::vector<Check> checks;
  checks.push_back({"mass", 0, integrate(density, adapted), 1.0});
  for (int d = 0; d < a.q; ++d) {
    const std::string tag = "[" + std::to_string(d + 1) + "]";
    checks.push_back({"mean" + tag, 1, integrate([&](const Eigen::VectorXd& z) { return z[d] * density(z); }, adapted),
                      mode[d]});
    for (int e = d; e < a.q; ++e)
      checks.push_back({"cov[" + std::to_string(d + 1) + "," + std::to_string(e + 1) + "]", 2,
                        integrate([&](const Eigen::VectorXd& z) { return (z[d] - mode[d]) * (z[e] - mode[e]) * density(z); },
                                  adapted),
                        psi(d, e)});
    checks.push_back({"m4" + tag, 4,
                      integrate([&](const Eigen::VectorXd& z) { return std::pow(z[d] - mode[d], 4) * density(z); },
                                adapted),
                      3.0 * psi(d, d) * psi(d, d)});
  }

  bool ok = true;
  std::cout << "\nmoment,expected,computed,status\n";
  for (const auto& c : checks) {
    std::string status = "skip";
    if (c.degree <= 2 * a.k - 1) {
      const bool pass = std::abs(c.got - c.want) <= 1e-10 * std::max(1.0, std::abs(c.want));
      status = pass ? "ok" : "FAIL";
      ok = ok && pass;
    }
    std::cout << c.name << "," << format_g17(c.want) << "," << format_g17(c.got) << "," << status << "\n";
  }
  std::cout << "\nmoment-check " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kInputError;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  std::string config, preset, out_dir = "aghfit-study";
  std::uint64_t seed = 0;
  int replicates = 0;
  std::vector<std::size_t> n;
};

int cmd_simulate(const SimArgs& a) {
  if (a.config.empty() == a.preset.empty()) throw InputError("simulate: give either a study config or --preset");
  StudyConfig study;
  if (!a.preset.empty()) {
    study = preset(a.preset, a.seed);
  } else {
    KeyValueConfig cfg = KeyValueConfig::load(a.config);
    cfg.set("seed", std::to_string(a.seed));
    study = study_from_config(cfg);
  }
  if (a.replicates > 0) study.replicates = a.replicates;
  if (!a.n.empty()) {
    std::vector<Scenario> scenarios;
    std::set<std::string> seen;
    for (const auto& s : study.scenarios)
      for (std::size_t n : a.n) {
        const Scenario sc{s.method, n};
        if (seen.insert(sc.label()).second) scenarios.push_back(sc);
      }
    study.scenarios = scenarios;
  }
  study.validate();

  fs::create_directories(a.out_dir);
  int code = kOk;
  SimulationReport rep;
  try {
    rep = run_study(study);
  } catch (const StudyFailure& e) {
    std::cerr << "warning: " << e.what() << "\n";
    rep = e.report();
    code = kNotConverged;
  }
  const fs::path dir(a.out_dir);
  const std::string text = render_table(rep, TableFormat::Text);
  write_file(dir / "report.txt", text);
  write_file(dir / "report.csv", render_table(rep, TableFormat::Csv));
  write_file(dir / "summary.csv", render_summary_csv(rep));
  write_file(dir / "timing.csv", render_timing_csv(rep));
  write_file(dir / "raw.csv", render_raw_csv(rep));
  std::cout << text;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binary latent variable models by adaptive Gauss-Hermite quadrature and Laplace approximations"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: AGH_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a 0/1 data CSV");
  fit_cmd->add_option("data_csv", fa.data, "Data CSV with a header of item names")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("spec_config", fa.spec, "Model spec config (q, mask)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--method", fa.method, "agh, aghK, laplace1 or laplace2")->capture_default_str();
  fit_cmd->add_option("--k", fa.k, "Nodes per dimension for --method agh")->check(CLI::Range(1, 64))->capture_default_str();
  fit_cmd->add_option("--tol", fa.tol, "Score tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--max-iter", fa.max_iter, "Outer iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--out", fa.out, "Estimates CSV path (default: stdout, summary to stderr)");

  CompareArgs ca;
  auto* cmp_cmd = app.add_subcommand("compare", "Fit several methods to the same data");
  cmp_cmd->add_option("data_csv", ca.data)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("spec_config", ca.spec)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--methods", ca.methods, "Comma separated methods")->capture_default_str();
  cmp_cmd->add_option("--tol", ca.tol, "Score tolerance")->check(CLI::PositiveNumber)->capture_default_str();

  QuadArgs qa;
  auto* quad_cmd = app.add_subcommand("quadcheck", "Print a Gauss-Hermite rule and check Gaussian moments");
  quad_cmd->add_option("--k", qa.k, "Nodes per dimension")->required()->check(CLI::Range(1, 64));
  quad_cmd->add_option("--q", qa.q, "Dimensions")->check(CLI::Range(1, 8))->capture_default_str();
  quad_cmd->add_option("--mode", qa.mode, "Centre, comma separated");
  quad_cmd->add_option("--psi", qa.psi, "Covariance, rows separated by ';'");

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study");
  sim_cmd->add_option("study_config", sa.config, "Study config file")->check(CLI::ExistingFile);
  sim_cmd->add_option("--preset", sa.preset, "table1, table2 or table3");
  sim_cmd->add_option("--seed", sa.seed, "Master seed")->required();
  sim_cmd->add_option("--out-dir", sa.out_dir, "Output directory")->capture_default_str();
  sim_cmd->add_option("--replicates", sa.replicates, "Override replicate count")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n", sa.n, "Override sample sizes")->delimiter(',')->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  if (threads > 0) set_thread_count(threads);
  try {
    if (*fit_cmd) return cmd_fit(fa);
    if (*cmp_cmd) return cmd_compare(ca);
    if (*quad_cmd) return cmd_quadcheck(qa);
    if (*sim_cmd) return cmd_simulate(sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
