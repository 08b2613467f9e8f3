#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace agh {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Cholesky of a curvature matrix failed. Carries the subject index when the
/// failure happened inside a per-subject evaluation (npos otherwise).
class NotPositiveDefinite : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NotPositiveDefinite(std::size_t subject = npos)
      : Error(subject == npos
                  ? std::string("curvature matrix is not positive definite")
                  : "curvature matrix is not positive definite for subject " +
                        std::to_string(subject)),
        subject_(subject) {}

  std::size_t subject() const noexcept { return subject_; }

 private:
  std::size_t subject_;
};

/// Integrand returned a non-finite value at a tensor node.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(std::size_t node)
      : Error("integrand is not finite at tensor node " + std::to_string(node)),
        node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// Newton mode search ran out of iterations.
class NonConvergence : public Error {
 public:
  NonConvergence(Eigen::VectorXd last_iterate, double grad_norm)
      : Error("posterior mode search did not converge (|grad|_inf = " +
              std::to_string(grad_norm) + ")"),
        last_iterate_(std::move(last_iterate)),
        grad_norm_(grad_norm) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  Eigen::VectorXd last_iterate_;
  double grad_norm_;
};

/// Newton iterate became non-finite. Unreachable for a convex L; treat as a bug.
class Divergence : public Error {
 public:
  using Error::Error;
};

/// Second-order Laplace factor 1 + c1 was not positive.
class CorrectionOverflow : public Error {
 public:
  explicit CorrectionOverflow(double c1)
      : Error("second-order Laplace correction 1 + c1 = " + std::to_string(1.0 + c1) +
              " is not positive"),
        c1_(c1) {}

  double c1() const noexcept { return c1_; }

 private:
  double c1_;
};

/// Bread matrix of the sandwich is singular.
class SingularInformation : public Error {
 public:
  using Error::Error;
};

/// Per-subject failure surfaced by the estimator, naming the subject.
class FitError : public Error {
 public:
  FitError(std::size_t subject, const std::string& what)
      : Error("subject " + std::to_string(subject) + ": " + what), subject_(subject) {}

  std::size_t subject() const noexcept { return subject_; }

 private:
  std::size_t subject_;
};

/// Malformed input file or configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace agh
