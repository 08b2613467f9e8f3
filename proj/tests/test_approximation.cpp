#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "agh/approximation.hpp"
#include "support.hpp"

using namespace agh;

namespace {

Theta scalar_theta(double a0, double a) {
  return Theta(ModelSpec::echelon(1, 1), Eigen::VectorXd::Constant(1, a0),
               Eigen::MatrixXd::Constant(1, 1, a));
}

Dataset coin_data(std::mt19937_64& rng, std::size_t n, int p) {
  RowMatrix y(static_cast<Eigen::Index>(n), p);
  for (std::size_t l = 0; l < n; ++l)
    for (int j = 0; j < p; ++j) y(static_cast<Eigen::Index>(l), j) = static_cast<double>(rng() & 1U);
  return Dataset(y);
}

double log_bernoulli(double a0, double y) {
  const double pi = 1.0 / (1.0 + std::exp(-a0));
  return y * std::log(pi) + (1 - y) * std::log(1 - pi);
}

}  // namespace

TEST(Method, ParsesTokens) {
  EXPECT_EQ(Method::parse("agh5"), Method::agh(5));
  EXPECT_EQ(Method::parse("laplace2"), Method::laplace2());
  EXPECT_EQ(Method::parse("LAP1"), Method::laplace1());
  EXPECT_EQ(Method::agh(15).name(), "agh15");
  EXPECT_THROW(Method::parse("agh0"), InvalidArgument);
  EXPECT_THROW(Method::parse("agh"), InvalidArgument);
  EXPECT_THROW(Method::parse("newton"), InvalidArgument);
}

TEST(AghMarginal, ZeroLoadingIsExactForEveryK) {
  for (double a0 : {-1.3, 0.0, 0.8})
    for (int k : {1, 2, 5, 10}) {
      const auto r = agh_marginal(scalar_theta(a0, 0.0), Eigen::VectorXd::Ones(1), k);
      EXPECT_NEAR(std::exp(r.log_value), 1.0 / (1.0 + std::exp(-a0)), 1e-14);
    }
  EXPECT_NEAR(std::exp(agh_marginal(scalar_theta(0, 0), Eigen::VectorXd::Ones(1), 3).log_value), 0.5, 1e-15);
}

TEST(AghMarginal, FifteenPointsMatchTrapezoidOracle) {
  const Theta t = scalar_theta(0.0, 1.0);
  const double oracle_lv = oracle::log_marginal_q1(t, Eigen::VectorXd::Ones(1));
  const auto r = agh_marginal(t, Eigen::VectorXd::Ones(1), 15);
  // True 15-point error here is 2.1e-10.
  EXPECT_NEAR(std::exp(r.log_value), std::exp(oracle_lv), 1e-9);
}

TEST(AghMarginal, OnePointEqualsLaplace1) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int q = 1 + static_cast<int>(rng() % 3);
    const int p = q + static_cast<int>(rng() % 5);
    const Theta t = oracle::random_theta(rng, p, q);
    const Eigen::VectorXd y = oracle::random_y(rng, p);
    const double a = agh_marginal(t, y, 1).log_value;
    const double b = laplace1_marginal(t, y);
    EXPECT_LE(oracle::rel_err(a, b), 1e-12);
  }
}

TEST(AghMarginal, ErrorNonIncreasingInK) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 4);
    const Theta t = oracle::random_theta(rng, p, 1);
    const Eigen::VectorXd y = oracle::random_y(rng, p);
    const double truth = oracle::log_marginal_q1(t, y);
    double prev = 1e300;
    for (int k : {1, 3, 5, 9, 15}) {
      const double err = std::abs(agh_marginal(t, y, k).log_value - truth);
      EXPECT_LE(err, std::max(prev, 1e-12)) << "k=" << k;
      prev = err;
    }
  }
}

TEST(Laplace, ZeroLoadingsAreExact) {
  const Theta t(ModelSpec::echelon(3, 2), Eigen::Vector3d(0.4, -0.2, 1.1), Eigen::MatrixXd::Zero(3, 2));
  const Eigen::Vector3d y(1, 0, 1);
  double exact = 0.0;
  for (int j = 0; j < 3; ++j) exact += log_bernoulli(t.intercepts()[j], y[j]);
  EXPECT_NEAR(laplace1_marginal(t, y), exact, 1e-14);
  EXPECT_NEAR(laplace2_marginal(t, y), exact, 1e-14);
  const BinaryItems items(t);
  EXPECT_EQ(laplace2_c1(items, find_mode(items, y, Eigen::Vector2d::Zero())), 0.0);
}

TEST(Laplace, SecondOrderBeatsFirstOrderOnSingleItem) {
  const Theta t = scalar_theta(0.0, 1.0);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(1);
  const double truth = oracle::log_marginal_q1(t, y);
  EXPECT_LT(std::abs(laplace2_marginal(t, y) - truth), std::abs(laplace1_marginal(t, y) - truth));
}

TEST(Laplace, SecondOrderErrorComparableToAgh5) {
  std::mt19937_64 rng(35);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 3 + static_cast<int>(rng() % 6);
    const Theta t = oracle::random_theta(rng, p, 1);
    const Eigen::VectorXd y = oracle::random_y(rng, p);
    const double truth = oracle::log_marginal_q1(t, y, 200001);
    const double e5 = std::abs(agh_marginal(t, y, 5).log_value - truth);
    const double e2 = std::abs(laplace2_marginal(t, y) - truth);
    if (e5 <= 10.0 * e2 + 1e-12) ++within;
  }
  EXPECT_GE(within, 90);
}

TEST(Laplace2, C1MatchesNaiveLoops) {
  std::mt19937_64 rng(37);
  for (int q = 1; q <= 3; ++q)
    for (int trial = 0; trial < 10; ++trial) {
      const Theta t = oracle::random_theta(rng, q + 3, q);
      const Eigen::VectorXd y = oracle::random_y(rng, q + 3);
      const BinaryItems items(t);
      const auto post = find_mode(items, y, Eigen::VectorXd::Zero(q));
      const Eigen::MatrixXd l3 = items.d3(post.mode), l4 = items.d4(post.mode);
      const double fast = laplace2_c1(post.psi, l3, l4);
      const double slow = oracle::naive_c1(post.psi, l3, l4);
      EXPECT_LE(oracle::rel_err(fast, slow), 1e-10) << "q=" << q;
    }
}

TEST(Laplace2, CorrectionOverflowIsReported) {
  EXPECT_DOUBLE_EQ(laplace2_c1(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1),
                               Eigen::MatrixXd::Constant(1, 1, 16.0)),
                   -2.0);
  // Rare item with a huge loading, curvature supplied at z = 0: 1 + c1 < 0.
  const BinaryItems items(scalar_theta(-6.0, 10.0));
  PosteriorApprox post;
  post.mode = Eigen::VectorXd::Zero(1);
  post.psi = post.cholesky = Eigen::MatrixXd::Identity(1, 1);
  ASSERT_LT(1.0 + laplace2_c1(items, post), 0.0);
  EXPECT_THROW(laplace2_log_marginal(items, Eigen::VectorXd::Zero(1), post), CorrectionOverflow);
}

TEST(Loglik, IdenticalRowsScaleLinearly) {
  std::mt19937_64 rng(39);
  const Theta t = oracle::random_theta(rng, 4, 2);
  const Eigen::VectorXd y = oracle::random_y(rng, 4);
  RowMatrix m(7, 4);
  for (int l = 0; l < 7; ++l) m.row(l) = y.transpose();
  const double single = agh_marginal(t, y, 5).log_value;
  EXPECT_NEAR(agh_loglik(t, Dataset(m), 5), 7 * single, 1e-12 * std::abs(7 * single));
}

TEST(Loglik, InterceptOnlyFactorises) {
  std::mt19937_64 rng(41);
  const Dataset data = coin_data(rng, 50, 3);
  const Theta t(ModelSpec::intercept_only(3), Eigen::Vector3d(0.2, -0.5, 1.0), Eigen::MatrixXd::Zero(3, 1));
  const Eigen::VectorXd ybar = data.item_means();
  double exact = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double pi = 1.0 / (1.0 + std::exp(-t.intercepts()[j]));
    exact += 50 * (ybar[j] * std::log(pi) + (1 - ybar[j]) * std::log(1 - pi));
  }
  EXPECT_NEAR(agh_loglik(t, data, 5), exact, 1e-10);
  EXPECT_NEAR(laplace1_loglik(t, data), exact, 1e-10);
  EXPECT_NEAR(laplace2_loglik(t, data), exact, 1e-10);
}

TEST(Loglik, ThreeFactorAghAndLaplace2Agree) {
  Eigen::MatrixXd a(6, 3);
  a << 1.01, 0, 0, 0.91, 0.83, 0, 0.50, 0.44, 1.45, 0.74, 0.88, 1.05, 1.16, 1.73, 0.62, 1.22, 1.46, 0.91;
  const Theta t(ModelSpec::echelon(6, 3), Eigen::VectorXd::Zero(6), a);
  std::mt19937_64 rng(43);
  const Dataset data = coin_data(rng, 200, 6);
  const double agh = agh_loglik(t, data, 5);
  const double lap2 = laplace2_loglik(t, data);
  ASSERT_TRUE(std::isfinite(agh));
  EXPECT_LE(oracle::rel_err(lap2, agh), 0.02);
}

TEST(Loglik, ContinuousInTheta) {
  std::mt19937_64 rng(45);
  const Theta t = oracle::random_theta(rng, 5, 2);
  const Eigen::VectorXd y = oracle::random_y(rng, 5);
  Eigen::VectorXd x = t.flatten();
  const double base = agh_marginal(t, y, 5).log_value;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    xp[i] += 1e-8;
    EXPECT_LE(std::abs(agh_marginal(Theta::unflatten(t.spec(), xp), y, 5).log_value - base), 1e-6);
  }
}

TEST(Normalisation, PatternsSumToOne) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 3; ++trial) {
    const int p = 4 + trial * 2, q = 1 + trial % 2;
    // |loading| <= 1: at 1.5 to 2 the 7-point pattern sum is off by 1e-6 to 3e-5.
    const Theta t = oracle::random_theta(rng, p, q, 1.0);
    double total = 0.0;
    for (int pat = 0; pat < (1 << p); ++pat) {
      Eigen::VectorXd y(p);
      for (int j = 0; j < p; ++j) y[j] = (pat >> j) & 1;
      total += std::exp(agh_marginal(t, y, 7).log_value);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(AghScore, SingleSubjectZeroLoadings) {
  const Theta t = scalar_theta(0.0, 0.0);
  RowMatrix y(1, 1);
  y << 1;
  const Eigen::VectorXd s = agh_score(t, Dataset(y), 5);
  EXPECT_NEAR(s[0], 0.5, 1e-15);
}

TEST(AghScore, VanishesAtInterceptOnlyMle) {
  std::mt19937_64 rng(49);
  const Dataset data = coin_data(rng, 80, 3);
  const Eigen::VectorXd m = data.item_means();
  Eigen::Vector3d a0;
  for (int j = 0; j < 3; ++j) a0[j] = std::log(m[j] / (1 - m[j]));
  const Theta t(ModelSpec::intercept_only(3), a0, Eigen::MatrixXd::Zero(3, 1));
  EXPECT_LE(agh_score(t, data, 5).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(AghScore, MatchesFiniteDifferencesAtFixedAdaptation) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const int q = 1 + static_cast<int>(rng() % 2);
    const int p = q + 2 + static_cast<int>(rng() % 3);
    const Theta t = oracle::random_theta(rng, p, q);
    const Dataset data = coin_data(rng, 15, p);
    const auto posts = compute_posteriors(t, data);
    const Eigen::VectorXd s = agh_score(t, data, 5, posts);
    const Eigen::VectorXd x = t.flatten();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = 1e-5;
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (agh_loglik(Theta::unflatten(t.spec(), xp), data, 5, posts) -
                         agh_loglik(Theta::unflatten(t.spec(), xm), data, 5, posts)) / (2 * h);
      EXPECT_LE(std::abs(fd - s[i]), 1e-5 * std::max(1.0, std::abs(s[i])));
    }
  }
}

TEST(Laplace2Score, InterceptOnlyIsExactScore) {
  std::mt19937_64 rng(53);
  const Dataset data = coin_data(rng, 40, 2);
  const Theta t(ModelSpec::intercept_only(2), Eigen::Vector2d(0.3, -0.4), Eigen::MatrixXd::Zero(2, 1));
  const Eigen::VectorXd s = laplace2_score(t, data);
  const Eigen::VectorXd m = data.item_means();
  for (int j = 0; j < 2; ++j) {
    const double pi = 1.0 / (1.0 + std::exp(-t.intercepts()[j]));
    EXPECT_NEAR(s[j], 40 * (m[j] - pi), 1e-6);
  }
}

TEST(Laplace2, Table1ScaleObjectiveImprovesUnderNewtonStep) {
  Eigen::MatrixXd a(6, 3);
  a << 1.01, 0, 0, 0.91, 0.83, 0, 0.50, 0.44, 1.45, 0.74, 0.88, 1.05, 1.16, 1.73, 0.62, 1.22, 1.46, 0.91;
  std::mt19937_64 rng(55);
  const Dataset data = coin_data(rng, 60, 6);
  const Theta t(ModelSpec::echelon(6, 3), Eigen::VectorXd::Zero(6), 0.5 * a);
  const double f0 = laplace2_loglik(t, data);
  ASSERT_TRUE(std::isfinite(f0));
  // A short gradient step must increase the objective.
  const Eigen::VectorXd g = laplace2_score(t, data);
  const Theta t1 = Theta::unflatten(t.spec(), t.flatten() + 1e-4 * g);
  EXPECT_GT(laplace2_loglik(t1, data), f0);
}

TEST(Batch, ResultsIndependentOfThreadCount) {
  std::mt19937_64 rng(57);
  const Theta t = oracle::random_theta(rng, 5, 2);
  const Dataset data = coin_data(rng, 101, 5);
  set_thread_count(1);
  const double a = agh_loglik(t, data, 5);
  const Eigen::VectorXd sa = agh_score(t, data, 5);
  set_thread_count(4);
  const double b = agh_loglik(t, data, 5);
  const Eigen::VectorXd sb = agh_score(t, data, 5);
  set_thread_count(0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(sa, sb);
}
