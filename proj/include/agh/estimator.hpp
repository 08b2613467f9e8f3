#pragma once

// Quasi-Newton maximisation of the approximated log-likelihood and the
// M-estimator (sandwich) covariance of the resulting estimates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/approximation.hpp"
#include "agh/errors.hpp"
#include "agh/model.hpp"
#include "agh/posterior.hpp"

namespace agh {

struct FitOptions {
  Method method = Method::agh(5);
  double param_tol = 1e-6;  // max |step| at convergence
  double score_tol = 1e-5;  // max |score| at convergence
  int max_outer = 500;
  ModeOptions inner{};
  double armijo_c = 1e-4;
  int max_halvings = 30;
  double max_step = 2.0;  // cap on max |step| of a trial point
  double max_drawdown = 50.0;  // stop once the adapted objective falls this far below its best
  double intercept_clip = 3.0;
  double initial_loading = 0.5;
  bool compute_covariance = true;
  std::optional<Theta> start;  // replaces the logit-of-means start when set

  void validate() const {
    if (!(param_tol > 0.0) || !(score_tol > 0.0) || !(inner.tol > 0.0))
      throw InvalidArgument("fit options: tolerances must be positive");
    if (!(max_step > 0.0) || !(max_drawdown > 0.0))
      throw InvalidArgument("fit options: max_step and max_drawdown must be positive");
    if (max_outer < 1 || inner.max_iter < 1)
      throw InvalidArgument("fit options: iteration limits must be positive");
  }
};

struct TraceEntry {
  double loglik;     // approximated log-likelihood at the iterate
  double grad_norm;  // max |score| at the iterate
  /// Objective the line search accepted, evaluated at this iterate with the
  /// previous iterate's adaptation (AGH) or re-solved modes (Laplace).
  /// Equals loglik for the starting point.
  double accepted_objective;
};

struct FitResult {
  Theta theta_hat;
  Eigen::MatrixXd covariance;  // over the free parameters, flatten() order
  Eigen::VectorXd std_errors;
  double loglik = 0.0;
  double score_norm = 0.0;
  int iterations = 0;
  double elapsed_seconds = 0.0;
  bool converged = false;
  bool covariance_indefinite = false;
  int laplace_fallbacks = 0;
  std::vector<TraceEntry> trace;
  std::vector<std::string> warnings;
};

namespace detail {

/// One evaluated iterate.
struct Iterate {
  Eigen::VectorXd x;  // active parameters
  Theta theta;
  std::vector<PosteriorApprox> posts;
  double loglik = 0.0;
  Eigen::VectorXd score;  // active components
};

/// Evaluates objective and score over the active subset of the free
/// parameters; the remaining free parameters stay at their starting values.
class Objective {
 public:
  Objective(const Dataset& data, const ModelSpec& spec, const FitOptions& opt,
            Eigen::VectorXd full_start, std::vector<int> active)
      : data_(data), spec_(spec), opt_(opt), full_(std::move(full_start)),
        active_(std::move(active)) {}

  Theta theta_at(const Eigen::VectorXd& x) const {
    Eigen::VectorXd full = full_;
    for (std::size_t i = 0; i < active_.size(); ++i) full[active_[i]] = x[static_cast<Eigen::Index>(i)];
    return Theta::unflatten(spec_, full);
  }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t i = 0; i < active_.size(); ++i) x[static_cast<Eigen::Index>(i)] = full[active_[i]];
    return x;
  }

  /// Full evaluation with fresh adaptation (warm-started from `warm`).
  Iterate evaluate(const Eigen::VectorXd& x, const std::vector<PosteriorApprox>* warm) {
    Iterate it{x, theta_at(x), {}, 0.0, {}};
    it.posts = compute_posteriors(BinaryItems(it.theta), data_, opt_.inner, warm);
    it.loglik = loglik_at(it.theta, it.posts);
    Eigen::VectorXd full_score;
    if (opt_.method.is_agh())
      full_score = agh_score(it.theta, data_, opt_.method.k(), it.posts);
    else
      full_score = fd_score(it.theta, data_, opt_.method, it.posts, true);
    it.score = restrict(full_score);
    return it;
  }

  /// Line-search objective at trial point x, relative to the current iterate.
  /// AGH keeps the current adaptation so that the score is its exact gradient.
  double trial(const Eigen::VectorXd& x, const Iterate& cur) {
    const Theta t = theta_at(x);
    if (opt_.method.is_agh()) return loglik_at(t, cur.posts);
    const auto posts = compute_posteriors(BinaryItems(t), data_, opt_.inner, &cur.posts);
    return loglik_at(t, posts);
  }

  int fallbacks() const { return fallbacks_; }

 private:
  double loglik_at(const Theta& t, const std::vector<PosteriorApprox>& posts) {
    int fb = 0;
    const double v = ordered_sum(subject_log_marginals(t, data_, opt_.method, posts, &fb));
    fallbacks_ = std::max(fallbacks_, fb);
    return v;
  }

  const Dataset& data_;
  const ModelSpec& spec_;
  const FitOptions& opt_;
  Eigen::VectorXd full_;
  std::vector<int> active_;
  int fallbacks_ = 0;
};

inline double logit(double m) { return std::log(m / (1.0 - m)); }

}  // namespace detail

/// Starting values: intercepts at logit of item means clipped to +-clip, free
/// loadings at `initial_loading`.
inline Theta starting_values(const Dataset& data, const ModelSpec& spec, double clip = 3.0,
                             double initial_loading = 0.5) {
  const Eigen::VectorXd m = data.item_means();
  Theta t(spec);
  for (int j = 0; j < spec.p(); ++j) {
    double a0;
    if (m[j] <= 0.0)
      a0 = -clip;
    else if (m[j] >= 1.0)
      a0 = clip;
    else
      a0 = std::clamp(detail::logit(m[j]), -clip, clip);
    t.intercepts()[j] = a0;
    for (int d = 0; d < spec.q(); ++d)
      if (spec.is_free(j, d)) t.loadings()(j, d) = initial_loading;
  }
  return t;
}

/// Flips each factor's loading column so its first free loading is >= 0.
inline Theta normalize_signs(const Theta& theta) {
  Theta out = theta;
  for (int d = 0; d < theta.q(); ++d) {
    const int r = theta.spec().first_free_row(d);
    if (r >= 0 && theta.loadings()(r, d) < 0.0) out.loadings().col(d) *= -1.0;
  }
  return Theta(out.spec(), out.intercepts(), out.loadings());
}

/// Per-subject estimating functions psi_l(theta) as an n x free_count matrix.
inline Eigen::MatrixXd subject_scores(const Theta& theta, const Dataset& data,
                                      const Method& method,
                                      const std::vector<PosteriorApprox>& posts) {
  if (method.is_agh()) return agh_subject_scores(theta, data, method.k(), posts);
  return fd_subject_scores(theta, data, method, posts, true);
}

struct SandwichResult {
  Eigen::MatrixXd covariance;
  bool indefinite = false;
  bool not_stationary = false;
};

/// B^{-1} A B^{-T} / n with A = (1/n) sum psi psi^T and B = -(1/n) d/dtheta sum psi,
/// B by central differences with step max(1e-5, 1e-5 |theta_i|). `active`
/// restricts the parameters (indices into flatten()); others get NaN rows.
inline SandwichResult sandwich_covariance_detail(const Theta& theta_hat, const Dataset& data,
                                                 const Method& method,
                                                 std::vector<int> active = {}) {
  const int np = theta_hat.free_count();
  if (active.empty())
    for (int i = 0; i < np; ++i) active.push_back(i);
  const auto na = static_cast<Eigen::Index>(active.size());
  const double n = static_cast<double>(data.n());

  const auto posts = compute_posteriors(theta_hat, data);
  const Eigen::MatrixXd psi_full = subject_scores(theta_hat, data, method, posts);
  Eigen::MatrixXd psi(psi_full.rows(), na);
  for (Eigen::Index i = 0; i < na; ++i) psi.col(i) = psi_full.col(active[i]);

  SandwichResult res;
  const Eigen::VectorXd total = ordered_colsum(psi);
  res.not_stationary = total.size() > 0 && total.lpNorm<Eigen::Infinity>() > 1e-4;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(na, na);
  for (Eigen::Index l = 0; l < psi.rows(); ++l) a.noalias() += psi.row(l).transpose() * psi.row(l);
  a /= n;

  const Eigen::VectorXd x = theta_hat.flatten();
  Eigen::MatrixXd b(na, na);
  for (Eigen::Index c = 0; c < na; ++c) {
    const int i = active[c];
    const double h = std::max(1e-5, 1e-5 * std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Theta tp = Theta::unflatten(theta_hat.spec(), xp);
    const Theta tm = Theta::unflatten(theta_hat.spec(), xm);
    const auto pp = compute_posteriors(BinaryItems(tp), data, {}, &posts);
    const auto pm = compute_posteriors(BinaryItems(tm), data, {}, &posts);
    const Eigen::VectorXd sp = ordered_colsum(subject_scores(tp, data, method, pp));
    const Eigen::VectorXd sm = ordered_colsum(subject_scores(tm, data, method, pm));
    const double step = (xp[i] - x[i]) + (x[i] - xm[i]);
    for (Eigen::Index r = 0; r < na; ++r) b(r, c) = -(sp[active[r]] - sm[active[r]]) / (step * n);
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
  if (na > 0) {
    const double bmax = b.cwiseAbs().maxCoeff();
    lu.setThreshold(1e-12);
    if (!(bmax > 0.0) || !lu.isInvertible())
      throw SingularInformation("sandwich: information matrix B is singular");
  }
  Eigen::MatrixXd cov_active(na, na);
  if (na > 0) {
    const Eigen::MatrixXd binv = lu.inverse();
    cov_active = binv * a * binv.transpose() / n;
    cov_active = 0.5 * (cov_active + cov_active.transpose()).eval();
  }

  res.covariance = Eigen::MatrixXd::Constant(np, np, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index r = 0; r < na; ++r)
    for (Eigen::Index c = 0; c < na; ++c) res.covariance(active[r], active[c]) = cov_active(r, c);
  if (na > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_active, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    res.indefinite = es.eigenvalues().minCoeff() < -1e-8 * std::max(lmax, 1e-300);
  }
  return res;
}

inline Eigen::MatrixXd sandwich_covariance(const Theta& theta_hat, const Dataset& data,
                                           const Method& method) {
  return sandwich_covariance_detail(theta_hat, data, method).covariance;
}

inline Eigen::VectorXd standard_errors(const Eigen::MatrixXd& cov) {
  Eigen::VectorXd se(cov.rows());
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    se[i] = cov(i, i) >= 0.0 ? std::sqrt(cov(i, i)) : std::numeric_limits<double>::quiet_NaN();
  return se;
}

/// BFGS ascent on the approximated log-likelihood.
///
/// Items without response variation have their intercept held at the clip
/// value (separation); a warning is recorded. Non-convergence after
/// max_outer iterations is reported through `converged`, not thrown.
inline FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opt = {}) {
  opt.validate();
  if (data.p() != spec.p())
    throw InvalidArgument("fit: dataset has " + std::to_string(data.p()) +
                          " items but the model spec has " + std::to_string(spec.p()));
  const auto t0 = std::chrono::steady_clock::now();

  FitResult res{Theta(spec)};
  Theta start = starting_values(data, spec, opt.intercept_clip, opt.initial_loading);
  const Eigen::VectorXd m = data.item_means();
  if (opt.start) {
    if (!(opt.start->spec() == spec)) throw InvalidArgument("fit: starting values have a different model spec");
    start.loadings() = opt.start->loadings();
    for (int j = 0; j < spec.p(); ++j)
      if (m[j] > 0.0 && m[j] < 1.0) start.intercepts()[j] = opt.start->intercepts()[j];
  }
  std::vector<int> active;
  for (int j = 0; j < spec.p(); ++j) {
    if (m[j] <= 0.0 || m[j] >= 1.0)
      res.warnings.push_back("separation: item " + std::to_string(j + 1) +
                             " has no response variation; intercept held at " +
                             std::to_string(start.intercepts()[j]));
    else
      active.push_back(j);
  }
  for (int i = spec.p(); i < spec.free_count(); ++i) active.push_back(i);

  detail::Objective obj(data, spec, opt, start.flatten(), active);
  detail::Iterate cur = obj.evaluate(obj.restrict(start.flatten()), nullptr);
  res.trace.push_back({cur.loglik, cur.score.size() ? cur.score.lpNorm<Eigen::Infinity>() : 0.0,
                       cur.loglik});

  const Eigen::Index na = cur.x.size();
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(na, na);
  bool hinv_is_identity = true;
  bool first_update = true;
  double last_change = std::numeric_limits<double>::infinity();
  const auto score_norm = [](const Eigen::VectorXd& g) {
    return g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0;
  };

  int iter = 0;
  double best_loglik = cur.loglik;
  // No step has been taken yet, so only the score criterion applies here.
  bool converged = na == 0 || score_norm(cur.score) <= opt.score_tol;

  while (!converged && iter < opt.max_outer) {
    Eigen::VectorXd dir = hinv * cur.score;
    double slope = cur.score.dot(dir);
    if (!(slope > 0.0)) {
      hinv.setIdentity();
      hinv_is_identity = true;
      dir = cur.score;
      slope = cur.score.dot(dir);
    }

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double t = 1.0;
      const double dmax = dir.lpNorm<Eigen::Infinity>();
      if (dmax * t > opt.max_step) t = opt.max_step / dmax;
      const double noise = 1e-13 * (1.0 + std::abs(cur.loglik));
      for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
        x_new = cur.x + t * dir;
        double f;
        try {
          f = obj.trial(x_new, cur);
        } catch (const FitError&) {
          continue;
        }
        if (std::isfinite(f) && f >= cur.loglik + opt.armijo_c * t * slope - noise) {
          accepted = true;
          f_new = f;
          break;
        }
      }
      if (!accepted && !hinv_is_identity) {
        hinv.setIdentity();
        hinv_is_identity = true;
        dir = cur.score;
        slope = cur.score.dot(dir);
      } else {
        break;
      }
    }
    if (!accepted) {
      res.warnings.push_back("line search failed at iteration " + std::to_string(iter + 1));
      break;
    }

    detail::Iterate next = obj.evaluate(x_new, &cur.posts);
    ++iter;
    const Eigen::VectorXd s = next.x - cur.x;
    const Eigen::VectorXd yv = cur.score - next.score;  // gradient change of -loglik
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      if (first_update) {
        hinv = Eigen::MatrixXd::Identity(na, na) * (sy / yv.squaredNorm());
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(na, na) - rho * s * yv.transpose();
      hinv = v * hinv * v.transpose() + rho * s * s.transpose();
      hinv_is_identity = false;
    }
    last_change = s.lpNorm<Eigen::Infinity>();
    res.trace.push_back({next.loglik, score_norm(next.score), f_new});
    cur = std::move(next);
    converged = score_norm(cur.score) <= opt.score_tol && last_change <= opt.param_tol;
    best_loglik = std::max(best_loglik, cur.loglik);
    if (!converged && best_loglik - cur.loglik > opt.max_drawdown) {
      res.warnings.push_back("drift: adapted log-likelihood fell " + std::to_string(best_loglik - cur.loglik) +
                             " below its best at iteration " + std::to_string(iter));
      break;
    }
  }

  res.iterations = iter;
  res.converged = converged;
  res.laplace_fallbacks = obj.fallbacks();
  if (res.laplace_fallbacks > 0)
    res.warnings.push_back("laplace2: " + std::to_string(res.laplace_fallbacks) +
                           " subject(s) fell back to laplace1 (1 + c1 <= 0)");
  res.theta_hat = normalize_signs(cur.theta);
  res.loglik = cur.loglik;
  res.score_norm = score_norm(cur.score);

  const int np = spec.free_count();
  res.covariance = Eigen::MatrixXd::Constant(np, np, std::numeric_limits<double>::quiet_NaN());
  res.std_errors = Eigen::VectorXd::Constant(np, std::numeric_limits<double>::quiet_NaN());
  if (opt.compute_covariance && !active.empty()) {
    try {
      const SandwichResult sw = sandwich_covariance_detail(res.theta_hat, data, opt.method, active);
      res.covariance = sw.covariance;
      res.covariance_indefinite = sw.indefinite;
      if (sw.indefinite) res.warnings.push_back("sandwich covariance is indefinite");
      if (sw.not_stationary)
        res.warnings.push_back("sandwich evaluated away from a stationary point (|score| > 1e-4)");
      res.std_errors = standard_errors(res.covariance);
    } catch (const SingularInformation& e) {
      res.warnings.push_back(e.what());
    }
  }
  res.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace agh
