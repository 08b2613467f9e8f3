#pragma once

// Adaptive Gauss-Hermite and Laplace (first and second order) approximations
// of the per-subject marginal density f(y; theta) = int g(y|z) h(z) dz, the
// summed log-likelihood, and the estimating function (score).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "agh/errors.hpp"
#include "agh/model.hpp"
#include "agh/numeric.hpp"
#include "agh/parallel.hpp"
#include "agh/posterior.hpp"
#include "agh/quadrature.hpp"

namespace agh {

/// Approximation backend: AGH with k points per dimension, or Laplace.
class Method {
 public:
  enum class Kind { AGH, Laplace1, Laplace2 };

  static Method agh(int k) {
    if (k < 1 || k > kMaxNodesPerDim)
      throw InvalidArgument("method: AGH needs 1 <= k <= 64, got " + std::to_string(k));
    return Method(Kind::AGH, k);
  }
  static Method laplace1() { return Method(Kind::Laplace1, 0); }
  static Method laplace2() { return Method(Kind::Laplace2, 0); }

  /// Accepts "aghK" (e.g. agh5), "laplace1"/"lap1", "laplace2"/"lap2".
  static Method parse(const std::string& token) {
    std::string t;
    for (char c : token)
      if (!std::isspace(static_cast<unsigned char>(c))) t += static_cast<char>(std::tolower(c));
    if (t == "laplace1" || t == "lap1") return laplace1();
    if (t == "laplace2" || t == "lap2") return laplace2();
    if (t.rfind("agh", 0) == 0 && t.size() > 3) {
      int k = 0;
      for (std::size_t i = 3; i < t.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(t[i])) || k > 1000)
          throw InvalidArgument("method: cannot parse '" + token + "'");
        k = 10 * k + (t[i] - '0');
      }
      return agh(k);
    }
    throw InvalidArgument("method: unknown method '" + token +
                          "' (expected aghK, laplace1 or laplace2)");
  }

  Kind kind() const { return kind_; }
  int k() const { return k_; }
  bool is_agh() const { return kind_ == Kind::AGH; }

  std::string name() const {
    switch (kind_) {
      case Kind::AGH: return "agh" + std::to_string(k_);
      case Kind::Laplace1: return "laplace1";
      case Kind::Laplace2: return "laplace2";
    }
    return "?";
  }

  bool operator==(const Method&) const = default;

 private:
  Method(Kind kind, int k) : kind_(kind), k_(k) {}
  Kind kind_;
  int k_;
};

// ---------------------------------------------------------------------------
// Per-subject evaluators

/// log f~ at a given (fixed) adaptation: log of
/// 2^{q/2}|T| sum_t exp(-L(z*_t)) prod w*.
inline double agh_log_marginal(const BinaryItems& items, const VectorRef& y,
                               const PosteriorApprox& post, const HermiteRule& rule) {
  const AdaptedRule adapted(rule, post.mode, post.cholesky);
  return log_integrate([&](const Eigen::VectorXd& z) { return -items.neg_log_joint(y, z); },
                       adapted);
}

struct MarginalResult {
  double log_value;
  PosteriorApprox post;
};

inline MarginalResult agh_marginal(const Theta& theta, const VectorRef& y, int k,
                                   const ModeOptions& mode_opt = {}) {
  const HermiteRule rule = hermite_rule(k);
  const BinaryItems items(theta);
  PosteriorApprox post =
      find_mode(items, y, Eigen::VectorXd::Zero(theta.q()), mode_opt);
  const double lv = agh_log_marginal(items, y, post, rule);
  return {lv, std::move(post)};
}

/// Quadrature-weighted posterior expectation of the complete-data scores,
/// adaptation held fixed. Output follows Theta::flatten ordering.
inline Eigen::VectorXd agh_subject_score(const BinaryItems& items, const ModelSpec& spec,
                                         const VectorRef& y, const PosteriorApprox& post,
                                         const HermiteRule& rule) {
  const AdaptedRule adapted(rule, post.mode, post.cholesky);
  const int p = items.p();
  const int q = items.q();
  std::vector<double> terms(adapted.size());
  adapted.for_each_node([&](std::size_t t, const Eigen::VectorXd& z, double log_w) {
    terms[t] = log_w - items.neg_log_joint(y, z);
  });
  const double lse = log_sum_exp(terms);

  Eigen::VectorXd s0 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd sa = Eigen::MatrixXd::Zero(p, q);
  Eigen::VectorXd r(p);
  adapted.for_each_node([&](std::size_t t, const Eigen::VectorXd& z, double) {
    const double w = std::exp(terms[t] - lse);
    const Eigen::VectorXd e = items.eta(z);
    for (int j = 0; j < p; ++j) r[j] = w * (y[j] - sigmoid(e[j]));
    s0 += r;
    sa.noalias() += r * z.transpose();
  });

  Eigen::VectorXd out(spec.free_count());
  int i = 0;
  for (int j = 0; j < p; ++j) out[i++] = s0[j];
  for (int j = 0; j < p; ++j)
    for (int d = 0; d < q; ++d)
      if (spec.is_free(j, d)) out[i++] = sa(j, d);
  return out;
}

/// (q/2) log 2pi + (1/2) log|Psi| - L(mode)
inline double laplace1_log_marginal(const BinaryItems& items, const VectorRef& y,
                                    const PosteriorApprox& post) {
  const int q = items.q();
  double log_det_t = 0.0;
  for (int d = 0; d < q; ++d) log_det_t += std::log(post.cholesky(d, d));
  return 0.5 * q * std::log(2.0 * std::numbers::pi) + log_det_t -
         items.neg_log_joint(y, post.mode);
}

/// Second-order Laplace coefficient
///   c1 = -(1/8) vec^T[Psi (x) Psi] vec[L4] + (5/24) vec^T[Psi (x) Psi (x) Psi] vec[L3 (x) L3]
/// with L3 stored q^2 x q and L4 stored q^3 x q (column-major vec).
inline double laplace2_c1(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& l3,
                          const Eigen::MatrixXd& l4) {
  const Eigen::MatrixXd psi2 = Eigen::kroneckerProduct(psi, psi);
  const Eigen::MatrixXd psi3 = Eigen::kroneckerProduct(psi2, psi);
  const Eigen::MatrixXd l33 = Eigen::kroneckerProduct(l3, l3);
  const auto vec = [](const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  };
  return -0.125 * vec(psi2).dot(vec(l4)) + (5.0 / 24.0) * vec(psi3).dot(vec(l33));
}

inline double laplace2_c1(const BinaryItems& items, const PosteriorApprox& post) {
  return laplace2_c1(post.psi, items.d3(post.mode), items.d4(post.mode));
}

/// laplace1 + log(1 + c1); throws CorrectionOverflow when 1 + c1 <= 0.
inline double laplace2_log_marginal(const BinaryItems& items, const VectorRef& y,
                                    const PosteriorApprox& post) {
  const double c1 = laplace2_c1(items, post);
  if (!(1.0 + c1 > 0.0)) throw CorrectionOverflow(c1);
  return laplace1_log_marginal(items, y, post) + std::log1p(c1);
}

inline double laplace1_marginal(const Theta& theta, const VectorRef& y) {
  const BinaryItems items(theta);
  const auto post = find_mode(items, y, Eigen::VectorXd::Zero(theta.q()));
  return laplace1_log_marginal(items, y, post);
}

inline double laplace2_marginal(const Theta& theta, const VectorRef& y) {
  const BinaryItems items(theta);
  const auto post = find_mode(items, y, Eigen::VectorXd::Zero(theta.q()));
  return laplace2_log_marginal(items, y, post);
}

// ---------------------------------------------------------------------------
// Batch evaluation over a dataset

/// Per-subject posterior modes, warm-started from `warm` when given.
inline std::vector<PosteriorApprox> compute_posteriors(
    const BinaryItems& items, const Dataset& data, const ModeOptions& opt = {},
    const std::vector<PosteriorApprox>* warm = nullptr) {
  std::vector<PosteriorApprox> out(data.n());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(items.q());
  parallel_for(data.n(), [&](std::size_t l) {
    const Eigen::VectorXd y = data.row(l);
    const Eigen::VectorXd& init = warm ? (*warm)[l].mode : zero;
    try {
      out[l] = find_mode(items, y, init, opt, l);
    } catch (const NotPositiveDefinite&) {
      throw;
    } catch (const Error& e) {
      throw FitError(l, e.what());
    }
  });
  return out;
}

inline std::vector<PosteriorApprox> compute_posteriors(const Theta& theta, const Dataset& data,
                                                       const ModeOptions& opt = {}) {
  return compute_posteriors(BinaryItems(theta), data, opt);
}

/// Per-subject log marginals under `method`, at the supplied adaptation.
/// For Laplace2, `fallbacks` (when non-null) enables per-subject fallback to
/// Laplace1 when 1 + c1 <= 0 and receives the fallback count.
inline Eigen::VectorXd subject_log_marginals(const Theta& theta, const Dataset& data,
                                             const Method& method,
                                             const std::vector<PosteriorApprox>& posts,
                                             int* fallbacks = nullptr) {
  const BinaryItems items(theta);
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.n()));
  std::optional<HermiteRule> rule;
  if (method.is_agh()) rule = hermite_rule(method.k());
  std::vector<char> fell_back(data.n(), 0);
  parallel_for(data.n(), [&](std::size_t l) {
    const Eigen::VectorXd y = data.row(l);
    double v = 0.0;
    switch (method.kind()) {
      case Method::Kind::AGH: v = agh_log_marginal(items, y, posts[l], *rule); break;
      case Method::Kind::Laplace1: v = laplace1_log_marginal(items, y, posts[l]); break;
      case Method::Kind::Laplace2:
        try {
          v = laplace2_log_marginal(items, y, posts[l]);
        } catch (const CorrectionOverflow&) {
          if (!fallbacks) throw;
          v = laplace1_log_marginal(items, y, posts[l]);
          fell_back[l] = 1;
        }
        break;
    }
    out[static_cast<Eigen::Index>(l)] = v;
  });
  if (fallbacks) {
    *fallbacks = 0;
    for (char c : fell_back) *fallbacks += c;
  }
  return out;
}

inline double ordered_sum(const Eigen::VectorXd& v) {
  return kahan_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Sum over subjects of log f~ with the supplied (fixed) adaptation.
inline double agh_loglik(const Theta& theta, const Dataset& data, int k,
                         const std::vector<PosteriorApprox>& posts) {
  return ordered_sum(subject_log_marginals(theta, data, Method::agh(k), posts));
}

inline double agh_loglik(const Theta& theta, const Dataset& data, int k) {
  return agh_loglik(theta, data, k, compute_posteriors(theta, data));
}

/// n x free_count matrix of per-subject AGH scores at the supplied adaptation.
inline Eigen::MatrixXd agh_subject_scores(const Theta& theta, const Dataset& data, int k,
                                          const std::vector<PosteriorApprox>& posts) {
  const BinaryItems items(theta);
  const HermiteRule rule = hermite_rule(k);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.n()), theta.free_count());
  parallel_for(data.n(), [&](std::size_t l) {
    const Eigen::VectorXd y = data.row(l);
    out.row(static_cast<Eigen::Index>(l)) =
        agh_subject_score(items, theta.spec(), y, posts[l], rule).transpose();
  });
  return out;
}

/// Column sums in subject order.
inline Eigen::VectorXd ordered_colsum(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    KahanSum s;
    for (Eigen::Index r = 0; r < m.rows(); ++r) s.add(m(r, c));
    out[c] = s.value();
  }
  return out;
}

inline Eigen::VectorXd agh_score(const Theta& theta, const Dataset& data, int k,
                                 const std::vector<PosteriorApprox>& posts) {
  return ordered_colsum(agh_subject_scores(theta, data, k, posts));
}

inline Eigen::VectorXd agh_score(const Theta& theta, const Dataset& data, int k) {
  return agh_score(theta, data, k, compute_posteriors(theta, data));
}

inline double laplace1_loglik(const Theta& theta, const Dataset& data) {
  return ordered_sum(
      subject_log_marginals(theta, data, Method::laplace1(), compute_posteriors(theta, data)));
}

inline double laplace2_loglik(const Theta& theta, const Dataset& data) {
  return ordered_sum(
      subject_log_marginals(theta, data, Method::laplace2(), compute_posteriors(theta, data)));
}

/// Relative central-difference step used for numerical scores.
inline double fd_step(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

/// Central finite differences of the summed log-likelihood under `method`,
/// re-solving every subject's mode (warm-started from `warm`) at each
/// perturbed parameter.
inline Eigen::VectorXd fd_score(const Theta& theta, const Dataset& data, const Method& method,
                                const std::vector<PosteriorApprox>& warm,
                                bool laplace2_fallback = false) {
  const Eigen::VectorXd x = theta.flatten();
  Eigen::VectorXd g(x.size());
  int fb = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Theta tp = Theta::unflatten(theta.spec(), xp);
    const Theta tm = Theta::unflatten(theta.spec(), xm);
    const auto pp = compute_posteriors(BinaryItems(tp), data, {}, &warm);
    const auto pm = compute_posteriors(BinaryItems(tm), data, {}, &warm);
    const double fp =
        ordered_sum(subject_log_marginals(tp, data, method, pp, laplace2_fallback ? &fb : nullptr));
    const double fm =
        ordered_sum(subject_log_marginals(tm, data, method, pm, laplace2_fallback ? &fb : nullptr));
    g[i] = (fp - fm) / ((xp[i] - x[i]) + (x[i] - xm[i]));
  }
  return g;
}

inline Eigen::VectorXd laplace2_score(const Theta& theta, const Dataset& data) {
  return fd_score(theta, data, Method::laplace2(), compute_posteriors(theta, data));
}

/// Per-subject central-difference scores of the log marginal under `method`,
/// as an n x free_count matrix.
inline Eigen::MatrixXd fd_subject_scores(const Theta& theta, const Dataset& data,
                                         const Method& method,
                                         const std::vector<PosteriorApprox>& warm,
                                         bool laplace2_fallback = false) {
  const Eigen::VectorXd x = theta.flatten();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.n()), x.size());
  int fb = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Theta tp = Theta::unflatten(theta.spec(), xp);
    const Theta tm = Theta::unflatten(theta.spec(), xm);
    const auto pp = compute_posteriors(BinaryItems(tp), data, {}, &warm);
    const auto pm = compute_posteriors(BinaryItems(tm), data, {}, &warm);
    const Eigen::VectorXd fp =
        subject_log_marginals(tp, data, method, pp, laplace2_fallback ? &fb : nullptr);
    const Eigen::VectorXd fm =
        subject_log_marginals(tm, data, method, pm, laplace2_fallback ? &fb : nullptr);
    out.col(i) = (fp - fm) / ((xp[i] - x[i]) + (x[i] - xm[i]));
  }
  return out;
}

}  // namespace agh
