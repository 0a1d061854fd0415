/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "gpfuse/covariance.hpp"
#include "oracles.hpp"

using namespace gpfuse;

namespace {
const KernelParams kExp(KernelFamily::exponential, 1.0, 500.0, 1.0, 0.0);
}

TEST(ScaledDistance, IdentityIsZero) {
  const auto p = SpaceTimePoint::make(12, 34, 1.25);
  EXPECT_EQ(scaled_distance(p, p, kExp).value(), 0.0);
}

TEST(ScaledDistance, OneTemporalRange) {
  const auto a = SpaceTimePoint::make(12, 34, 1.0);
  const auto b = SpaceTimePoint::make(12, 34, 3.5);
  const KernelParams k(KernelFamily::exponential, 1.0, 500.0, 2.5, 0.0);
  EXPECT_DOUBLE_EQ(scaled_distance(a, b, k).value(), 1.0);
}

TEST(ScaledDistance, AntipodalEquatorialPoints) {
  const KernelParams k(KernelFamily::exponential, 1.0, 6371.0 * M_PI, 1.0, 0.0);
  const auto a = SpaceTimePoint::make(0, 0, 0);
  const auto b = SpaceTimePoint::make(0, -180, 0);
  EXPECT_NEAR(scaled_distance(a, b, k).value(), 1.0, 1e-12);
  EXPECT_NEAR(great_circle_km(a, b), 6371.0 * M_PI, 1e-9);
}

TEST(ScaledDistance, NegativeValueRejected) { EXPECT_THROW(ScaledDistance(-1e-3), InputError); }

TEST(ScaledDistance, SymmetricAndMatchesHaversine) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180), t(0, 3);
  for (int i = 0; i < 2000; ++i) {
    const auto a = SpaceTimePoint::make(lat(rng), lon(rng), t(rng));
    const auto b = SpaceTimePoint::make(lat(rng), lon(rng), t(rng));
    EXPECT_EQ(scaled_distance(a, b, kExp).value(), scaled_distance(b, a, kExp).value());
    EXPECT_NEAR(great_circle_km(a, b), oracle::haversine_km(a.lat(), a.lon(), b.lat(), b.lon()), 1e-6);
  }
}

TEST(ScaledDistance, TriangleInequalityWithinTimeSlice) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
  for (int i = 0; i < 2000; ++i) {
    const auto a = SpaceTimePoint::make(lat(rng), lon(rng), 2.0);
    const auto b = SpaceTimePoint::make(lat(rng), lon(rng), 2.0);
    const auto c = SpaceTimePoint::make(lat(rng), lon(rng), 2.0);
    EXPECT_LE(scaled_distance(a, c, kExp).value(),
              scaled_distance(a, b, kExp).value() + scaled_distance(b, c, kExp).value() + 1e-12);
  }
}

TEST(KernelValue, ClosedForms) {
  EXPECT_EQ(kernel_value(kExp, ScaledDistance(0.0)), 1.0);
  EXPECT_NEAR(kernel_value(kExp, ScaledDistance(1.0)), 0.367879, 1e-6);
  const KernelParams m(KernelFamily::matern32, 2.0, 500.0, 1.0, 0.0);
  EXPECT_EQ(kernel_value(m, ScaledDistance(0.0)), 2.0);
  EXPECT_NEAR(kernel_value(m, ScaledDistance(0.7)), 2.0 * oracle::corr(KernelFamily::matern32, 0.7), 1e-15);
}

TEST(KernelValue, MonotoneAndBounded) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(0, 30);
  for (auto fam : {KernelFamily::exponential, KernelFamily::matern32}) {
    const KernelParams k(fam, 1.7, 500.0, 1.0, 0.0);
    for (int i = 0; i < 5000; ++i) {
      double a = d(rng), b = d(rng);
      if (a > b) std::swap(a, b);
      const double va = kernel_value(k, ScaledDistance(a));
      const double vb = kernel_value(k, ScaledDistance(b));
      EXPECT_GE(va, vb);
      EXPECT_LE(va, 1.7);
      EXPECT_GE(vb, 0.0);
    }
  }
}

TEST(BuildCov, SinglePointDiagonal) {
  const KernelParams k(KernelFamily::exponential, 1.0, 500.0, 1.0, 0.1);
  const std::vector<SpaceTimePoint> p{SpaceTimePoint::make(1, 2, 0)};
  const std::vector<double> noise{0.5};
  const auto c = build_cov(p, k, noise);
  ASSERT_EQ(c.rows(), 1);
  EXPECT_DOUBLE_EQ(c(0, 0), 1.35);
}

TEST(BuildCov, DuplicatePointsRankDeficient) {
  const KernelParams k(KernelFamily::exponential, 1.0, 500.0, 1.0, 0.2);
  const auto x = SpaceTimePoint::make(1, 2, 0);
  const std::vector<SpaceTimePoint> p{x, x};
  const auto c = build_cov(p, k);
  EXPECT_EQ(c(0, 0), 1.2);
  EXPECT_EQ(c(1, 1), 1.2);
  EXPECT_EQ(c(0, 1), 1.0);
  EXPECT_EQ(c(1, 0), 1.0);
  const KernelParams k0(KernelFamily::exponential, 1.0, 500.0, 1.0, 0.0);
  const auto c0 = build_cov(p, k0);
  EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(c0).rank(), 1);
}

TEST(BuildCov, MatchesElementwiseOracle) {
  std::mt19937_64 rng(14);
  for (auto fam : {KernelFamily::exponential, KernelFamily::matern32}) {
    const KernelParams k(fam, 1.3, 400.0, 0.7, 0.05);
    const auto pts = oracle::random_points(6, rng, 8.0);
    const std::vector<double> noise{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto c = build_cov(pts, k, noise);
    const auto o = oracle::cov_matrix(pts, k, noise);
    EXPECT_LT((c - o).cwiseAbs().maxCoeff(), 1e-12);
    const auto x = build_cross_cov(pts, oracle::random_points(3, rng, 8.0), k);
    EXPECT_EQ(x.rows(), 6);
    EXPECT_EQ(x.cols(), 3);
  }
}

TEST(BuildCov, ExactlySymmetric) {
  std::mt19937_64 rng(15);
  const auto pts = oracle::random_points(80, rng, 20.0);
  const auto c = build_cov(pts, kExp);
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) ASSERT_EQ(c(i, j), c(j, i));
}

TEST(BuildCov, PositiveSemiDefinite) {
  std::mt19937_64 rng(16);
  for (auto fam : {KernelFamily::exponential, KernelFamily::matern32}) {
    const KernelParams k(fam, 1.0, 300.0, 1.0, 0.01);
    for (int n : {10, 50, 200}) {
      const auto pts = oracle::random_points(static_cast<std::size_t>(n), rng, 10.0);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_cov(pts, k));
      EXPECT_GT(es.eigenvalues().minCoeff(), -1e-8 * k.sill());
    }
  }
}

TEST(BuildCov, NoiseLengthChecked) {
  const std::vector<SpaceTimePoint> p{SpaceTimePoint::make(1, 2, 0), SpaceTimePoint::make(2, 2, 0)};
  const std::vector<double> noise{0.1};
  EXPECT_THROW(build_cov(p, kExp, noise), InputError);
}
