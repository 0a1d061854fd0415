/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gpfuse/trends.hpp"

using namespace gpfuse;

namespace {

Observation at(double lat, double lon, double t, double v) { return Observation(SpaceTimePoint::make(lat, lon, t), v, 0.5); }

// Two regions split at longitude 0 over a 10 x 20 degree box.
Raster two_regions() {
  const GridSpec g(5.0, 0.0, 10.0, -10.0, 10.0, 0);
  std::vector<int> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = g.cell_center(i).lon() < 0 ? 0 : 1;
  return Raster(g, v);
}

}  // namespace

TEST(FitLine, ConstantSeries) {
  const std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7}, y(8, 400.0);
  const auto f = fit_line(x, y);
  EXPECT_EQ(f.slope, 0.0);
  EXPECT_EQ(f.slope_se, 0.0);
  EXPECT_NEAR(f.intercept, 400.0, 1e-12);
}

TEST(FitLine, ExactLine) {
  std::vector<double> x(12), y(12);
  for (int q = 0; q < 12; ++q) {
    x[q] = q;
    y[q] = 396.0 + 0.6 * q;
  }
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 0.6, 1e-12);
  EXPECT_NEAR(f.intercept, 396.0, 1e-10);
  EXPECT_NEAR(f.slope_se, 0.0, 1e-10);
  EXPECT_FALSE(f.se_undefined);
}

TEST(FitLine, AgreesWithNormalEquations) {
  const std::vector<double> x{0, 1, 2, 3, 4, 5}, y{1.0, 2.5, 2.9, 4.2, 5.1, 5.8};
  const auto f = fit_line(x, y);
  // Closed-form OLS written out directly.
  const double n = 6, sx = 15, sxx = 55;
  const double sy = std::accumulate(y.begin(), y.end(), 0.0);
  double sxy = 0;
  for (int i = 0; i < 6; ++i) sxy += x[i] * y[i];
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;
  double sse = 0;
  for (int i = 0; i < 6; ++i) sse += std::pow(y[i] - a - b * x[i], 2);
  const double s2 = sse / (n - 2);
  EXPECT_NEAR(f.slope, b, 1e-12);
  EXPECT_NEAR(f.intercept, a, 1e-12);
  EXPECT_NEAR(f.slope_se, std::sqrt(s2 * n / (n * sxx - sx * sx)), 1e-12);
  EXPECT_NEAR(f.intercept_se, std::sqrt(s2 * sxx / (n * sxx - sx * sx)), 1e-12);
}

TEST(FitLine, TwoPointsHaveNoStandardError) {
  const std::vector<double> x{0, 1}, y{1, 3};
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_TRUE(f.se_undefined);
}

TEST(BootstrapMean, MatchesClosedFormStandardError) {
  Rng gen(71);
  std::vector<double> v(60);
  for (double& x : v) x = gen.normal(400.0, 1.5);
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / (n - 1)) / std::sqrt(n);
  Rng rng(72);
  const auto [mu, sd] = bootstrap_mean(v, 2000, rng);
  EXPECT_NEAR(mu, mean, 3 * se / std::sqrt(2000.0) + 1e-9);
  EXPECT_NEAR(sd, se, 0.1 * se);
}

TEST(BootstrapMean, SingleReplicateHasZeroSd) {
  const std::vector<double> v{1, 2, 3};
  Rng rng(1);
  EXPECT_EQ(bootstrap_mean(v, 1, rng).second, 0.0);
}

TEST(RegionalTrends, RecoversPerRegionSlopes) {
  std::vector<Observation> obs;
  Rng rng(73);
  for (int q = 0; q < 8; ++q)
    for (int k = 0; k < 40; ++k) {
      const double t = 90.0 * q + 89.0 * rng.uniform();
      obs.push_back(at(2 + 6 * rng.uniform(), -8 + 6 * rng.uniform(), t, 396.0 + 0.6 * q + rng.normal(0, 0.2)));
      obs.push_back(at(2 + 6 * rng.uniform(), 2 + 6 * rng.uniform(), t, 401.0 + 0.3 * q + rng.normal(0, 0.2)));
    }
  std::vector<double> bounds(9);
  for (int q = 0; q <= 8; ++q) bounds[q] = 90.0 * q;
  const auto r = regional_trends(obs, two_regions(), bounds, 200, 5);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.quarters.size(), 16u);
  EXPECT_NEAR(r.rows[0].slope, 0.6, 0.03);
  EXPECT_NEAR(r.rows[1].slope, 0.3, 0.03);
  EXPECT_NEAR(r.rows[0].intercept, 396.0, 0.1);
  EXPECT_TRUE(r.warnings.empty());
  const auto again = regional_trends(obs, two_regions(), bounds, 200, 5);
  EXPECT_EQ(again.rows[0].slope, r.rows[0].slope);
}

TEST(RegionalTrends, SparseRegionOmittedWithWarning) {
  std::vector<Observation> obs{at(5, -5, 10, 400), at(5, -5, 100, 401), at(5, 5, 10, 399)};
  const std::vector<double> bounds{0, 90, 180};
  const auto r = regional_trends(obs, two_regions(), bounds, 50, 1);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].region, 0);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("region 1"), std::string::npos);
}

TEST(RegionalTrends, OffRasterAndOutOfRangeIgnored) {
  std::vector<Observation> obs{at(40, 0, 10, 1000), at(5, -5, 500, 1000), at(5, -5, 10, 400), at(5, -5, 100, 400)};
  const std::vector<double> bounds{0, 90, 180};
  const auto r = regional_trends(obs, two_regions(), bounds, 10, 1);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_NEAR(r.rows[0].intercept, 400.0, 1e-12);
}

TEST(RegionalTrends, RejectsBadBoundaries) {
  const std::vector<Observation> obs;
  EXPECT_THROW(regional_trends(obs, two_regions(), std::vector<double>{0}, 10, 1), InputError);
  EXPECT_THROW(regional_trends(obs, two_regions(), std::vector<double>{0, 0}, 10, 1), InputError);
  EXPECT_THROW(regional_trends(obs, two_regions(), std::vector<double>{0, 1}, 0, 1), InputError);
}
