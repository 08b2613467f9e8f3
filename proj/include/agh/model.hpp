#pragma once

// Binary-item latent variable model with logit link: item parameters, data,
// and the complete-data negative log-density L(z) with its z-derivatives.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/errors.hpp"
#include "agh/numeric.hpp"

namespace agh {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

enum class ItemFamily { BinaryLogit };

/// Dimensions and loading pattern. mask(j, d) is true when loading of item j on
/// factor d is a free parameter.
class ModelSpec {
 public:
  ModelSpec(int p, int q, Mask mask, ItemFamily family = ItemFamily::BinaryLogit)
      : p_(p), q_(q), mask_(std::move(mask)), family_(family) {
    validate();
  }

  /// Echelon pattern: item j loads on factors 0..j.
  static ModelSpec echelon(int p, int q) {
    Mask m(p, q);
    for (int j = 0; j < p; ++j)
      for (int d = 0; d < q; ++d) m(j, d) = j >= d;
    return ModelSpec(p, q, std::move(m));
  }

  /// No free loadings; one latent dimension that the items ignore.
  static ModelSpec intercept_only(int p) { return ModelSpec(p, 1, Mask::Constant(p, 1, false)); }

  int p() const { return p_; }
  int q() const { return q_; }
  const Mask& mask() const { return mask_; }
  ItemFamily family() const { return family_; }
  bool is_free(int j, int d) const { return mask_(j, d); }
  int free_loadings() const { return static_cast<int>(mask_.count()); }
  int free_count() const { return p_ + free_loadings(); }

  /// Row of the first free loading in factor d, or -1.
  int first_free_row(int d) const {
    for (int j = 0; j < p_; ++j)
      if (mask_(j, d)) return j;
    return -1;
  }

  bool operator==(const ModelSpec& o) const {
    return p_ == o.p_ && q_ == o.q_ && mask_ == o.mask_ && family_ == o.family_;
  }

 private:
  void validate() const {
    if (p_ < 1 || q_ < 1) throw InvalidArgument("model spec: need p >= 1 and q >= 1");
    if (q_ > p_) throw InvalidArgument("model spec: q must not exceed p");
    if (mask_.rows() != p_ || mask_.cols() != q_)
      throw InvalidArgument("model spec: mask must be p x q");
    for (int d = 1; d < q_; ++d)
      for (int j = 0; j < d; ++j)
        if (mask_(j, d))
          throw InvalidArgument("model spec: mask is not echelon (item " + std::to_string(j + 1) +
                                " is free on factor " + std::to_string(d + 1) + ")");
    if (mask_.count() == 0) return;  // intercept-only
    for (int d = 0; d < q_; ++d)
      if (!mask_.col(d).any())
        throw InvalidArgument("model spec: factor " + std::to_string(d + 1) +
                              " has no free loading");
  }

  int p_;
  int q_;
  Mask mask_;
  ItemFamily family_;
};

/// Item intercepts, loadings and (fixed) scales. Masked loadings are stored as
/// zero by every constructor here, and are never read by the kernels.
class Theta {
 public:
  explicit Theta(ModelSpec spec)
      : spec_(std::move(spec)),
        intercepts_(Eigen::VectorXd::Zero(spec_.p())),
        loadings_(Eigen::MatrixXd::Zero(spec_.p(), spec_.q())),
        scales_(Eigen::VectorXd::Ones(spec_.p())) {}

  Theta(ModelSpec spec, Eigen::VectorXd intercepts, const Eigen::MatrixXd& loadings)
      : Theta(std::move(spec)) {
    if (intercepts.size() != spec_.p() || loadings.rows() != spec_.p() ||
        loadings.cols() != spec_.q())
      throw InvalidArgument("theta: dimensions do not match the model spec");
    intercepts_ = std::move(intercepts);
    for (int j = 0; j < spec_.p(); ++j)
      for (int d = 0; d < spec_.q(); ++d)
        loadings_(j, d) = spec_.is_free(j, d) ? loadings(j, d) : 0.0;
  }

  const ModelSpec& spec() const { return spec_; }
  int p() const { return spec_.p(); }
  int q() const { return spec_.q(); }

  const Eigen::VectorXd& intercepts() const { return intercepts_; }
  Eigen::VectorXd& intercepts() { return intercepts_; }
  const Eigen::MatrixXd& loadings() const { return loadings_; }
  /// Raw storage; writes to masked cells are ignored by every computation.
  Eigen::MatrixXd& loadings() { return loadings_; }
  const Eigen::VectorXd& scales() const { return scales_; }

  /// Loadings with masked cells forced to zero.
  Eigen::MatrixXd masked_loadings() const {
    return spec_.mask().select(loadings_, Eigen::MatrixXd::Zero(p(), q()));
  }

  int free_count() const { return spec_.free_count(); }

  /// Intercepts by item, then free loadings in item-major order.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd x(free_count());
    int i = 0;
    for (int j = 0; j < p(); ++j) x[i++] = intercepts_[j];
    for (int j = 0; j < p(); ++j)
      for (int d = 0; d < q(); ++d)
        if (spec_.is_free(j, d)) x[i++] = loadings_(j, d);
    return x;
  }

  static Theta unflatten(const ModelSpec& spec, const Eigen::VectorXd& x) {
    if (x.size() != spec.free_count())
      throw InvalidArgument("theta: flat vector has " + std::to_string(x.size()) +
                            " entries, expected " + std::to_string(spec.free_count()));
    Theta t(spec);
    int i = 0;
    for (int j = 0; j < spec.p(); ++j) t.intercepts_[j] = x[i++];
    for (int j = 0; j < spec.p(); ++j)
      for (int d = 0; d < spec.q(); ++d)
        if (spec.is_free(j, d)) t.loadings_(j, d) = x[i++];
    return t;
  }

  /// Display names matching the flattened order: a0_j and a_j_d (1-based).
  static std::vector<std::string> parameter_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    for (int j = 0; j < spec.p(); ++j) names.push_back("a0_" + std::to_string(j + 1));
    for (int j = 0; j < spec.p(); ++j)
      for (int d = 0; d < spec.q(); ++d)
        if (spec.is_free(j, d))
          names.push_back("a_" + std::to_string(j + 1) + "_" + std::to_string(d + 1));
    return names;
  }

 private:
  ModelSpec spec_;
  Eigen::VectorXd intercepts_;
  Eigen::MatrixXd loadings_;
  Eigen::VectorXd scales_;
};

/// n x p binary responses, one row per subject.
class Dataset {
 public:
  explicit Dataset(RowMatrix y) : y_(std::move(y)) {
    if (y_.rows() < 1) throw InvalidArgument("dataset: need at least one subject");
    if (y_.cols() < 1) throw InvalidArgument("dataset: need at least one item");
    for (Eigen::Index l = 0; l < y_.rows(); ++l)
      for (Eigen::Index j = 0; j < y_.cols(); ++j)
        if (y_(l, j) != 0.0 && y_(l, j) != 1.0)
          throw InvalidArgument("dataset: entry (" + std::to_string(l + 1) + ", " +
                                std::to_string(j + 1) + ") is not 0 or 1");
  }

  std::size_t n() const { return static_cast<std::size_t>(y_.rows()); }
  int p() const { return static_cast<int>(y_.cols()); }
  const RowMatrix& y() const { return y_; }
  Eigen::VectorXd row(std::size_t l) const { return y_.row(static_cast<Eigen::Index>(l)).transpose(); }
  Eigen::VectorXd item_means() const { return y_.colwise().mean().transpose(); }

 private:
  RowMatrix y_;
};

/// Evaluates L(z) = -[log g(y|z) + log h(z)] and its derivatives for one
/// parameter value. Built once from a Theta and reused across subjects.
class BinaryItems {
 public:
  explicit BinaryItems(const Theta& theta)
      : intercepts_(theta.intercepts()), loadings_(theta.masked_loadings()) {}

  int p() const { return static_cast<int>(intercepts_.size()); }
  int q() const { return static_cast<int>(loadings_.cols()); }
  const Eigen::VectorXd& intercepts() const { return intercepts_; }
  const Eigen::MatrixXd& loadings() const { return loadings_; }

  Eigen::VectorXd eta(const VectorRef& z) const { return intercepts_ + loadings_ * z; }

  double neg_log_joint(const VectorRef& y, const VectorRef& z) const {
    const Eigen::VectorXd e = eta(z);
    double s = 0.0;
    for (int j = 0; j < p(); ++j) s += log1pexp(e[j]) - y[j] * e[j];
    return s + 0.5 * q() * std::log(2.0 * std::numbers::pi) + 0.5 * z.squaredNorm();
  }

  Eigen::VectorXd grad(const VectorRef& y, const VectorRef& z) const {
    const Eigen::VectorXd e = eta(z);
    Eigen::VectorXd resid(p());
    for (int j = 0; j < p(); ++j) resid[j] = y[j] - sigmoid(e[j]);
    return z - loadings_.transpose() * resid;
  }

  Eigen::MatrixXd hess(const VectorRef& z) const {
    const Eigen::VectorXd e = eta(z);
    const int qq = q();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(qq, qq);
    for (int j = 0; j < p(); ++j) {
      const double pi = sigmoid(e[j]);
      const double w = pi * (1.0 - pi);
      for (int c = 0; c < qq; ++c)
        for (int r = c; r < qq; ++r) h(r, c) += w * loadings_(j, r) * loadings_(j, c);
    }
    for (int c = 0; c < qq; ++c)
      for (int r = c + 1; r < qq; ++r) h(c, r) = h(r, c);
    return h;
  }

  /// Third derivative of L as a q^2 x q matrix: sum_j vec(a a^T) a^T pi(1-pi)(1-2pi).
  Eigen::MatrixXd d3(const VectorRef& z) const {
    const Eigen::VectorXd e = eta(z);
    const int qq = q();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(qq * qq, qq);
    for (int j = 0; j < p(); ++j) {
      const double pi = sigmoid(e[j]);
      const double s = pi * (1.0 - pi) * (1.0 - 2.0 * pi);
      const Eigen::VectorXd a = loadings_.row(j).transpose();
      for (int c = 0; c < qq; ++c)
        for (int b = 0; b < qq; ++b)
          for (int r = 0; r < qq; ++r) out(r + qq * b, c) += s * a[r] * a[b] * a[c];
    }
    return out;
  }

  /// Fourth derivative of L as a q^3 x q matrix:
  /// sum_j vec[vec(a a^T) a^T] a^T pi(1-pi)(1-6pi+6pi^2).
  Eigen::MatrixXd d4(const VectorRef& z) const {
    const Eigen::VectorXd e = eta(z);
    const int qq = q();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(qq * qq * qq, qq);
    for (int j = 0; j < p(); ++j) {
      const double pi = sigmoid(e[j]);
      const double s = pi * (1.0 - pi) * (1.0 - 6.0 * pi + 6.0 * pi * pi);
      const Eigen::VectorXd a = loadings_.row(j).transpose();
      for (int c = 0; c < qq; ++c)
        for (int b2 = 0; b2 < qq; ++b2)
          for (int b = 0; b < qq; ++b)
            for (int r = 0; r < qq; ++r)
              out(r + qq * b + qq * qq * b2, c) += s * a[r] * a[b] * a[b2] * a[c];
    }
    return out;
  }

 private:
  Eigen::VectorXd intercepts_;
  Eigen::MatrixXd loadings_;
};

inline Eigen::VectorXd eta(const Theta& theta, const VectorRef& z) {
  return BinaryItems(theta).eta(z);
}
inline double neg_log_joint(const Theta& theta, const VectorRef& y, const VectorRef& z) {
  return BinaryItems(theta).neg_log_joint(y, z);
}
inline Eigen::VectorXd grad_L(const Theta& theta, const VectorRef& y, const VectorRef& z) {
  return BinaryItems(theta).grad(y, z);
}
/// Does not depend on y for the logit link; y is accepted for symmetry.
inline Eigen::MatrixXd hess_L(const Theta& theta, const VectorRef& /*y*/, const VectorRef& z) {
  return BinaryItems(theta).hess(z);
}
inline Eigen::MatrixXd d3_L(const Theta& theta, const VectorRef& /*y*/, const VectorRef& z) {
  return BinaryItems(theta).d3(z);
}
inline Eigen::MatrixXd d4_L(const Theta& theta, const VectorRef& /*y*/, const VectorRef& z) {
  return BinaryItems(theta).d4(z);
}

}  // namespace agh
