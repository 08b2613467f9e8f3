#pragma once

// Independent oracles and random instance generators shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "agh/model.hpp"

namespace oracle {

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Returns
/// (eigenvalues ascending, eigenvectors as columns).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-32) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  Eigen::VectorXd ev(n);
  Eigen::MatrixXd vs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ev[i] = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
    vs.col(i) = v.col(idx[static_cast<std::size_t>(i)]);
  }
  return {ev, vs};
}

/// Golub-Welsch: nodes are Jacobi-matrix eigenvalues, weights sqrt(pi) v_0^2.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> golub_welsch(int k) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(k, k);
  for (int i = 1; i < k; ++i) j(i - 1, i) = j(i, i - 1) = std::sqrt(i / 2.0);
  auto [ev, vs] = jacobi_eigen(j);
  Eigen::VectorXd w(k);
  for (int i = 0; i < k; ++i) w[i] = std::sqrt(std::numbers::pi) * vs(0, i) * vs(0, i);
  return {ev, w};
}

/// Composite trapezoid of f over [lo, hi] with `points` points.
template <class F>
double trapezoid(F&& f, double lo = -12.0, double hi = 12.0, int points = 1000000) {
  const double h = (hi - lo) / (points - 1);
  long double s = 0.5L * (f(lo) + f(hi));
  for (int i = 1; i < points - 1; ++i) s += f(lo + i * h);
  return static_cast<double>(s * h);
}

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// log of the exact single-factor marginal  int prod_j P(y_j | z) phi(z) dz.
inline double log_marginal_q1(const agh::Theta& theta, const Eigen::VectorXd& y,
                              int points = 1000000) {
  // Integrate exp(log integrand - peak) to keep the sum well scaled.
  const auto log_integrand = [&](double z) {
    double s = std::log(std_normal_pdf(z));
    for (int j = 0; j < theta.p(); ++j) {
      const double e = theta.intercepts()[j] + theta.loadings()(j, 0) * z;
      s += y[j] * e - (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
    }
    return s;
  };
  double peak = -1e300;
  for (double z = -12.0; z <= 12.0; z += 0.01) peak = std::max(peak, log_integrand(z));
  const double v = trapezoid([&](double z) { return std::exp(log_integrand(z) - peak); }, -12.0,
                             12.0, points);
  return std::log(v) + peak;
}

/// c1 from explicit index loops over the Kronecker products and column-major vec.
inline double naive_c1(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& l3,
                       const Eigen::MatrixXd& l4) {
  const int q = static_cast<int>(psi.rows());
  const auto flat = [](const Eigen::MatrixXd& m, long idx) {
    return m(idx % m.rows(), idx / m.rows());
  };
  // vec(Psi (x) Psi): element (i1 q + i2, j1 q + j2) sits at (i1 q + i2) + q^2 (j1 q + j2).
  double t4 = 0.0;
  const long q2 = static_cast<long>(q) * q;
  for (int i1 = 0; i1 < q; ++i1)
    for (int i2 = 0; i2 < q; ++i2)
      for (int j1 = 0; j1 < q; ++j1)
        for (int j2 = 0; j2 < q; ++j2) {
          const long row = static_cast<long>(i1) * q + i2, col = static_cast<long>(j1) * q + j2;
          t4 += psi(i1, j1) * psi(i2, j2) * flat(l4, row + q2 * col);
        }
  // L3 (x) L3 is q^4 x q^2: element (r1 q^2 + r2, c1 q + c2) = L3(r1, c1) L3(r2, c2).
  // Psi^(x)3 is q^3 x q^3; both vecs have q^6 entries.
  double t6 = 0.0;
  const long q3 = q2 * q, q4 = q2 * q2;
  for (long r = 0; r < q3; ++r)
    for (long c = 0; c < q3; ++c) {
      const int a1 = static_cast<int>(r / q2), a2 = static_cast<int>((r / q) % q),
                a3 = static_cast<int>(r % q);
      const int b1 = static_cast<int>(c / q2), b2 = static_cast<int>((c / q) % q),
                b3 = static_cast<int>(c % q);
      const double kron3 = psi(a1, b1) * psi(a2, b2) * psi(a3, b3);
      const long m = r + q3 * c;  // position in vec, reused for L3 (x) L3
      const long lr = m % q4, lc = m / q4;
      const long r1 = lr / q2, r2 = lr % q2, c1 = lc / q, c2 = lc % q;
      t6 += kron3 * l3(r1, c1) * l3(r2, c2);
    }
  return -t4 / 8.0 + 5.0 * t6 / 24.0;
}

/// Random binary GLLVM instance: echelon mask, intercepts in [-1, 1],
/// loadings in [-max_loading, max_loading].
inline agh::Theta random_theta(std::mt19937_64& rng, int p, int q, double max_loading = 1.5) {
  std::uniform_real_distribution<double> ua(-1.0, 1.0), ul(-max_loading, max_loading);
  const agh::ModelSpec spec = agh::ModelSpec::echelon(p, q);
  Eigen::VectorXd a0(p);
  Eigen::MatrixXd a(p, q);
  for (int j = 0; j < p; ++j) {
    a0[j] = ua(rng);
    for (int d = 0; d < q; ++d) a(j, d) = ul(rng);
  }
  return agh::Theta(spec, a0, a);
}

inline Eigen::VectorXd random_y(std::mt19937_64& rng, int p) {
  Eigen::VectorXd y(p);
  for (int j = 0; j < p; ++j) y[j] = static_cast<double>(rng() & 1U);
  return y;
}

/// E[(X + s)^m] for X ~ N(0, sigma^2).
inline double shifted_normal_moment(int m, double sigma, double s) {
  double out = 0.0, binom = 1.0;
  for (int i = 0; i <= m; ++i) {
    if (i > 0) binom = binom * (m - i + 1) / i;
    if (i % 2) continue;
    double dfact = 1.0;  // (i - 1)!!
    for (int f = i - 1; f > 1; f -= 2) dfact *= f;
    out += binom * std::pow(s, m - i) * std::pow(sigma, i) * dfact;
  }
  return out;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace oracle
