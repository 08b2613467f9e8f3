#pragma once

// Gauss-Hermite rules (weight e^{-z^2}) and their adaptive, tensor-product
// form centred at a posterior mode and scaled by the Cholesky factor of the
// posterior curvature.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/errors.hpp"
#include "agh/numeric.hpp"

namespace agh {

inline constexpr int kMaxNodesPerDim = 64;
inline constexpr int kMaxDimensions = 8;
inline constexpr double kMaxTensorNodes = 1e8;

/// Univariate Gauss-Hermite rule for the weight function e^{-z^2}.
class HermiteRule {
 public:
  HermiteRule(Eigen::VectorXd nodes, Eigen::VectorXd weights)
      : nodes_(std::move(nodes)), weights_(std::move(weights)) {
    log_adapted_.resize(nodes_.size());
    for (Eigen::Index i = 0; i < nodes_.size(); ++i)
      log_adapted_[i] = std::log(weights_[i]) + nodes_[i] * nodes_[i];
  }

  int k() const { return static_cast<int>(nodes_.size()); }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  /// log(w_t * exp(z_t^2)), the adaptive weights in log space.
  const Eigen::VectorXd& log_adapted_weights() const { return log_adapted_; }

 private:
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_adapted_;
};

/// k-point rule. Nodes are eigenvalues of the symmetric Jacobi matrix with
/// off-diagonal sqrt(i/2); weights come from the Christoffel function of the
/// orthonormal Hermite polynomials, which keeps tail weights relatively
/// accurate. Output is exactly symmetric about zero.
inline HermiteRule hermite_rule(int k) {
  if (k < 1 || k > kMaxNodesPerDim)
    throw InvalidArgument("hermite_rule: k must lie in [1, 64], got " + std::to_string(k));

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd sub(std::max(k - 1, 0));
  for (int i = 1; i < k; ++i) sub[i - 1] = std::sqrt(0.5 * i);

  Eigen::VectorXd nodes(k);
  if (k == 1) {
    nodes[0] = 0.0;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error("hermite_rule: eigen-solver failed");
    nodes = es.eigenvalues();
  }

  // Symmetrise: node_i = -node_{k-1-i}, centre node exactly 0 for odd k.
  for (int i = 0; i < k / 2; ++i) {
    const double a = 0.5 * (nodes[k - 1 - i] - nodes[i]);
    nodes[i] = -a;
    nodes[k - 1 - i] = a;
  }
  if (k % 2 == 1) nodes[k / 2] = 0.0;

  const double p0 = 1.0 / std::sqrt(std::sqrt(std::numbers::pi));
  Eigen::VectorXd weights(k);
  for (int i = 0; i < k; ++i) {
    const double x = nodes[i];
    double prev = 0.0;
    double cur = p0;
    double sum = cur * cur;
    for (int j = 0; j + 1 < k; ++j) {
      const double bj = std::sqrt(0.5 * j);
      const double bj1 = std::sqrt(0.5 * (j + 1));
      const double next = (x * cur - bj * prev) / bj1;
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    weights[i] = 1.0 / sum;
  }
  for (int i = 0; i < k / 2; ++i) {
    const double w = 0.5 * (weights[i] + weights[k - 1 - i]);
    weights[i] = w;
    weights[k - 1 - i] = w;
  }
  return HermiteRule(std::move(nodes), std::move(weights));
}

/// Number of tensor nodes k^q, refusing grids beyond the supported size.
inline std::size_t tensor_size(int k, int q) {
  if (q < 1 || q > kMaxDimensions)
    throw InvalidArgument("tensor grid: q must lie in [1, 8], got " + std::to_string(q));
  if (std::pow(static_cast<double>(k), q) > kMaxTensorNodes)
    throw InvalidArgument("tensor grid: k^q = " + std::to_string(k) + "^" + std::to_string(q) +
                          " exceeds 1e8 nodes");
  std::size_t n = 1;
  for (int d = 0; d < q; ++d) n *= static_cast<std::size_t>(k);
  return n;
}

/// Gauss-Hermite rule recentred at `mode` and rotated/scaled by the Cholesky
/// factor T of the curvature Psi = T T^T. Node t (odometer order, last
/// dimension fastest) is sqrt(2) T (z_{t_1}, ..., z_{t_q}) + mode.
class AdaptedRule {
 public:
  AdaptedRule(HermiteRule base, Eigen::VectorXd mode, Eigen::MatrixXd cholesky)
      : base_(std::move(base)), mode_(std::move(mode)), chol_(std::move(cholesky)) {
    const int q = static_cast<int>(mode_.size());
    size_ = tensor_size(base_.k(), q);
    double log_det = 0.0;
    for (int d = 0; d < q; ++d) log_det += std::log(chol_(d, d));
    log_scale_ = 0.5 * q * std::numbers::ln2 + log_det;
    root2_chol_ = std::numbers::sqrt2 * chol_;
  }

  const HermiteRule& base() const { return base_; }
  const Eigen::VectorXd& mode() const { return mode_; }
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  int dims() const { return static_cast<int>(mode_.size()); }
  std::size_t size() const { return size_; }

  /// 2^{q/2} |T|
  double scale() const { return std::exp(log_scale_); }
  double log_scale() const { return log_scale_; }

  /// Per-dimension adaptive weights w_t exp(z_t^2).
  Eigen::VectorXd adapted_weights() const { return base_.log_adapted_weights().array().exp(); }

  /// Adapted node for flat tensor index t.
  Eigen::VectorXd node(std::size_t t) const {
    Eigen::VectorXd u(dims());
    const int k = base_.k();
    for (int d = dims() - 1; d >= 0; --d) {
      u[d] = base_.nodes()[static_cast<Eigen::Index>(t % k)];
      t /= k;
    }
    return root2_chol_ * u + mode_;
  }

  /// Visits every adapted node in odometer order: fn(index, z_star, log_weight)
  /// where log_weight = sum_d log(w*_{t_d}).
  template <class Fn>
  void for_each_node(Fn&& fn) const {
    const int q = dims();
    const int k = base_.k();
    std::vector<int> idx(q, 0);
    Eigen::VectorXd u(q);
    Eigen::VectorXd z(q);
    for (std::size_t t = 0; t < size_; ++t) {
      double lw = 0.0;
      for (int d = 0; d < q; ++d) {
        u[d] = base_.nodes()[idx[d]];
        lw += base_.log_adapted_weights()[idx[d]];
      }
      z.noalias() = root2_chol_ * u;
      z += mode_;
      fn(t, static_cast<const Eigen::VectorXd&>(z), lw);
      for (int d = q - 1; d >= 0; --d) {
        if (++idx[d] < k) break;
        idx[d] = 0;
      }
    }
  }

 private:
  HermiteRule base_;
  Eigen::VectorXd mode_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd root2_chol_;
  std::size_t size_ = 0;
  double log_scale_ = 0.0;
};

/// Lower Cholesky factor of a symmetric positive definite matrix.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& psi,
                                      std::size_t subject = NotPositiveDefinite::npos) {
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(subject);
  Eigen::MatrixXd t = llt.matrixL();
  for (Eigen::Index d = 0; d < t.rows(); ++d)
    if (!(t(d, d) > 0.0) || !std::isfinite(t(d, d))) throw NotPositiveDefinite(subject);
  return t;
}

inline AdaptedRule adapt(const HermiteRule& rule, const Eigen::VectorXd& mode,
                         const Eigen::MatrixXd& psi,
                         std::size_t subject = NotPositiveDefinite::npos) {
  if (psi.rows() != mode.size() || psi.cols() != mode.size())
    throw InvalidArgument("adapt: psi must be q x q with q = mode.size()");
  return AdaptedRule(rule, mode, cholesky_lower(psi, subject));
}

/// scale * sum_t f(z*_t) prod_d w*_{t_d}, Kahan-accumulated in odometer order.
template <class F>
double integrate(F&& f, const AdaptedRule& rule) {
  KahanSum acc;
  rule.for_each_node([&](std::size_t t, const Eigen::VectorXd& z, double log_w) {
    const double v = f(z);
    if (!std::isfinite(v)) throw EvaluationError(t);
    acc.add(v * std::exp(log_w));
  });
  return rule.scale() * acc.value();
}

/// log of the adaptive integral of exp(log_f), evaluated by log-sum-exp.
/// log_f may return -inf (zero integrand) but not NaN or +inf.
template <class LogF>
double log_integrate(LogF&& log_f, const AdaptedRule& rule) {
  std::vector<double> terms(rule.size());
  rule.for_each_node([&](std::size_t t, const Eigen::VectorXd& z, double log_w) {
    const double v = log_f(z);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) throw EvaluationError(t);
    terms[t] = v + log_w;
  });
  return rule.log_scale() + log_sum_exp(terms);
}

}  // namespace agh
