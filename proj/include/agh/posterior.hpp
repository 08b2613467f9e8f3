#pragma once

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "agh/errors.hpp"
#include "agh/model.hpp"
#include "agh/quadrature.hpp"

namespace agh {

/// Gaussian approximation of one subject's posterior at its mode.
struct PosteriorApprox {
  Eigen::VectorXd mode;      // minimiser of L
  Eigen::MatrixXd psi;       // inverse Hessian of L at the mode
  Eigen::MatrixXd cholesky;  // lower T with psi = T T^T
  int iterations = 0;        // Newton steps taken
  double grad_norm = 0.0;    // |grad L|_inf at the mode
};

struct ModeOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

/// Newton iteration z <- z - H(z)^{-1} grad L(z) until |grad L|_inf <= tol.
/// L is strongly convex (H >= I), so full steps are taken; a step is halved
/// only if it increases L.
inline PosteriorApprox find_mode(const BinaryItems& items, const VectorRef& y,
                                 const VectorRef& init, const ModeOptions& opt = {},
                                 std::size_t subject = NotPositiveDefinite::npos) {
  if (!(opt.tol > 0.0) || opt.max_iter < 1)
    throw InvalidArgument("find_mode: need tol > 0 and max_iter >= 1");
  Eigen::VectorXd z = init;
  Eigen::VectorXd g = items.grad(y, z);
  double gnorm = g.lpNorm<Eigen::Infinity>();
  double f = items.neg_log_joint(y, z);
  int it = 0;
  while (gnorm > opt.tol) {
    if (it >= opt.max_iter) throw NonConvergence(z, gnorm);
    Eigen::LLT<Eigen::MatrixXd> llt(items.hess(z));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(subject);
    const Eigen::VectorXd step = llt.solve(g);
    double t = 1.0;
    Eigen::VectorXd trial = z - step;
    double f_trial = items.neg_log_joint(y, trial);
    for (int h = 0; h < 30 && !(f_trial <= f + 1e-12 * (1.0 + std::abs(f))); ++h) {
      t *= 0.5;
      trial = z - t * step;
      f_trial = items.neg_log_joint(y, trial);
    }
    if (!trial.allFinite() || !std::isfinite(f_trial))
      throw Divergence("find_mode: non-finite Newton iterate");
    z = std::move(trial);
    f = f_trial;
    g = items.grad(y, z);
    gnorm = g.lpNorm<Eigen::Infinity>();
    ++it;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(items.hess(z));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(subject);
  PosteriorApprox out;
  out.psi = llt.solve(Eigen::MatrixXd::Identity(z.size(), z.size()));
  out.psi = 0.5 * (out.psi + out.psi.transpose()).eval();
  out.cholesky = cholesky_lower(out.psi, subject);
  out.mode = std::move(z);
  out.iterations = it;
  out.grad_norm = gnorm;
  return out;
}

inline PosteriorApprox find_mode(const Theta& theta, const VectorRef& y, const VectorRef& init,
                                 double tol = 1e-10, int max_iter = 100) {
  return find_mode(BinaryItems(theta), y, init, ModeOptions{tol, max_iter});
}

}  // namespace agh
