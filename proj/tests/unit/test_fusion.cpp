/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#include <gtest/gtest.h>

#include "gpfuse/fusion.hpp"
#include "oracles.hpp"

using namespace gpfuse;

namespace {

const KernelParams kLand(KernelFamily::exponential, 1.0, 500.0, 1.0, 0.0);
const KernelParams kOcean(KernelFamily::matern32, 0.5, 800.0, 2.0, 0.01);

FusionConfig config(std::size_t m = 10) {
  FusionConfig c;
  c.land = kLand;
  c.ocean = kOcean;
  c.m = m;
  c.prior_mean = 400.0;
  return c;
}

const GridSpec kGrid(1.0, 0, 5, 0, 5, 0);

std::vector<Observation> scattered(std::size_t n, std::uint64_t seed, SurfaceClass s = SurfaceClass::land,
                                   int instrument = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < n; ++i)
    obs.emplace_back(SpaceTimePoint::make(5 * u(rng), 5 * u(rng), u(rng)), 400 + 3 * u(rng), 0.3, instrument, true, s);
  return obs;
}

MetaDataset meta_of(std::vector<std::vector<Observation>> sets) { return concat_instruments(sets); }

}  // namespace

TEST(ConcatInstruments, PreservesBlocks) {
  const auto a = scattered(3, 1, SurfaceClass::land, 1);
  const auto b = scattered(2, 2, SurfaceClass::land, 2);
  const auto meta = meta_of({a, b});
  ASSERT_EQ(meta.size(), 5u);
  EXPECT_EQ(meta.block_sizes(), (std::vector<std::size_t>{3, 2}));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(meta.observations()[i], a[i]);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(meta.observations()[3 + i], b[i]);
  EXPECT_EQ(meta.observations()[4].instrument_id(), 2);
  EXPECT_TRUE(meta.geometries().empty());
}

TEST(ConcatInstruments, EmptySecondDataset) {
  const auto a = scattered(4, 3);
  const auto meta = meta_of({a, {}});
  EXPECT_EQ(meta.observations(), a);
  EXPECT_THROW(concat_instruments(std::vector<std::vector<Observation>>{}), InputError);
}

TEST(ConcatInstruments, GeometryAlignment) {
  const auto a = scattered(2, 4);
  const auto b = scattered(1, 5);
  const SoundingGeometry g({1000, 500}, {400, 400}, {0.5, 0.5}, Eigen::MatrixXd::Identity(2, 2));
  const std::vector<std::vector<Observation>> sets{a, b};
  const std::vector<std::vector<SoundingGeometry>> geoms{{g, g}, {}};
  const auto meta = concat_instruments(sets, geoms);
  ASSERT_EQ(meta.geometries().size(), 3u);
  EXPECT_TRUE(meta.geometries()[0].has_value());
  EXPECT_FALSE(meta.geometries()[2].has_value());
  const std::vector<std::vector<SoundingGeometry>> bad{{g}, {}};
  EXPECT_THROW(concat_instruments(sets, bad), InputError);
}

TEST(ConcatInstruments, KrigingTheFusionEqualsKrigingTheConcatenation) {
  const auto a = scattered(7, 6, SurfaceClass::land, 1);
  auto b = scattered(5, 7, SurfaceClass::land, 2);
  const auto meta = meta_of({a, b});
  std::vector<Observation> direct = a;
  direct.insert(direct.end(), b.begin(), b.end());
  const auto t = SpaceTimePoint::make(2.5, 2.5, 0.5);
  const auto x = oracle::ordinary_kriging(direct, t, kLand);
  const auto w = effective_weights(t, meta, kLand, meta.size());
  ASSERT_EQ(w.size(), direct.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], x.weights(static_cast<int>(i)), 1e-9);
}

TEST(FuseDay, ZeroObservationsGivesPrior) {
  const auto product = fuse_day(meta_of({{}}), kGrid, Raster::filled(kGrid, 0), config());
  EXPECT_TRUE(product.land.prior_only);
  EXPECT_FALSE(product.warnings.empty());
  ASSERT_EQ(product.land.cells.size(), 25u);
  EXPECT_TRUE(product.ocean.cells.empty());
  EXPECT_EQ(product.ocean.precision.dimension(), 0u);
  for (const auto& c : product.land.cells) {
    EXPECT_EQ(c.value, 400.0);
    EXPECT_NEAR(c.sd, std::sqrt(kLand.point_variance()), 1e-12);
    EXPECT_FALSE(c.geometry.has_value());
    EXPECT_EQ(c.n_contributing, 0u);
  }
  EXPECT_EQ(product.land.precision.dimension(), 25u);
}

TEST(FuseDay, NoiseFreeObservationAtCellCenter) {
  const auto center = kGrid.cell_center(12);
  const std::vector<Observation> obs{Observation(center, 404.5, 0.0)};
  for (std::size_t m : {1u, 5u, 30u}) {
    const auto product = fuse_day(meta_of({obs}), kGrid, Raster::filled(kGrid, 0), config(m));
    const auto& cell = product.land.cells[12];
    EXPECT_EQ(cell.grid_index, 12u);
    EXPECT_NEAR(cell.value, 404.5, 1e-9);
    EXPECT_LE(cell.sd, 1e-5);
  }
}

TEST(FuseDay, SaturatedMatchesDenseKriging) {
  const auto obs = scattered(40, 8);
  const auto product = fuse_day(meta_of({obs}), kGrid, Raster::filled(kGrid, 0), config(64));
  ASSERT_EQ(product.land.mean_method, "gls");
  for (const auto& c : product.land.cells) {
    const auto o = oracle::ordinary_kriging(obs, c.center, kLand);
    EXPECT_NEAR(c.value, o.prediction, 1e-6);
  }
  const auto dense = oracle::conditional(obs, [&] {
    std::vector<SpaceTimePoint> g;
    for (std::size_t i = 0; i < kGrid.size(); ++i) g.push_back(kGrid.cell_center(i));
    return g;
  }(), kLand, product.land.mean_estimate);
  for (const auto& c : product.land.cells)
    EXPECT_NEAR(c.sd, std::sqrt(dense.cov(static_cast<int>(c.grid_index), static_cast<int>(c.grid_index))), 1e-8);
}

TEST(FuseDay, QualityFilterDropsFlaggedObservations) {
  auto obs = scattered(10, 9);
  auto with_bad = obs;
  with_bad.emplace_back(kGrid.cell_center(3), 1000.0, 0.1, 1, false, SurfaceClass::land);
  const auto a = fuse_day(meta_of({obs}), kGrid, Raster::filled(kGrid, 0), config());
  const auto b = fuse_day(meta_of({with_bad}), kGrid, Raster::filled(kGrid, 0), config());
  EXPECT_EQ(b.land.n_obs, 10u);
  for (std::size_t k = 0; k < a.land.cells.size(); ++k) EXPECT_EQ(a.land.cells[k].value, b.land.cells[k].value);
}

TEST(FuseDay, FusionEqualsConcatenationBitwise) {
  const auto a = scattered(20, 10, SurfaceClass::land, 1);
  const auto b = scattered(15, 11, SurfaceClass::land, 2);
  std::vector<Observation> joined = a;
  joined.insert(joined.end(), b.begin(), b.end());
  const auto split = fuse_day(meta_of({a, b}), kGrid, Raster::filled(kGrid, 0), config());
  const auto whole = fuse_day(meta_of({joined}), kGrid, Raster::filled(kGrid, 0), config());
  for (std::size_t k = 0; k < split.land.cells.size(); ++k) {
    EXPECT_EQ(split.land.cells[k].value, whole.land.cells[k].value);
    EXPECT_EQ(split.land.cells[k].sd, whole.land.cells[k].sd);
  }
  EXPECT_EQ(split.land.precision, whole.land.precision);
}

TEST(FuseDay, LandAndOceanAreSeparated) {
  std::vector<int> mask(kGrid.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = kGrid.cell_center(i).lon() > 2.5 ? 1 : 0;
  const Raster raster(kGrid, mask);
  const auto land = scattered(20, 12, SurfaceClass::land);
  const auto ocean = scattered(20, 13, SurfaceClass::ocean);
  std::vector<Observation> perturbed;
  for (const auto& o : ocean) perturbed.push_back(o.with_value(o.value() + 50.0));
  const auto a = fuse_day(meta_of({land, ocean}), kGrid, raster, config());
  const auto b = fuse_day(meta_of({land, perturbed}), kGrid, raster, config());
  ASSERT_EQ(a.land.cells.size(), 15u);
  ASSERT_EQ(a.ocean.cells.size(), 10u);
  for (std::size_t k = 0; k < a.land.cells.size(); ++k) {
    EXPECT_EQ(a.land.cells[k].value, b.land.cells[k].value);
    EXPECT_EQ(a.land.cells[k].sd, b.land.cells[k].sd);
  }
  EXPECT_EQ(a.land.precision, b.land.precision);
  bool moved = false;
  for (std::size_t k = 0; k < a.ocean.cells.size(); ++k) moved |= a.ocean.cells[k].value != b.ocean.cells[k].value;
  EXPECT_TRUE(moved);
  for (const auto& c : a.ocean.cells) EXPECT_EQ(c.surface, SurfaceClass::ocean);
}

TEST(FuseDay, PosteriorSdNeverExceedsPrior) {
  for (std::size_t m : {1u, 4u, 10u}) {
    const auto obs = scattered(60, 14 + m);
    const auto p = fuse_day(meta_of({obs}), kGrid, Raster::filled(kGrid, 0), config(m));
    for (const auto& c : p.land.cells) {
      EXPECT_GE(c.sd, 0.0);
      EXPECT_LE(c.sd, std::sqrt(kLand.point_variance()) + 1e-9);
    }
    EXPECT_TRUE(p.land.precision.is_positive_definite());
  }
}

TEST(FuseDay, GapFilledCellsRevertToPrior) {
  const GridSpec wide(1.0, 0, 5, 0, 60, 0);
  const std::vector<Observation> obs{Observation(SpaceTimePoint::make(2.5, 0.5, 0.5), 405.0, 0.2)};
  const auto p = fuse_day(meta_of({obs}), wide, Raster::filled(wide, 0), config());
  const auto& far = p.land.cells.back();
  EXPECT_EQ(far.n_contributing, 0u);
  EXPECT_GT(far.sd, 0.99 * std::sqrt(kLand.point_variance()));
  EXPECT_EQ(p.land.cells[2 * 60].n_contributing, 1u);
}

TEST(FuseDay, CombinedGeometryKeepsUnitWeightSum) {
  const auto obs = scattered(12, 15);
  std::vector<SoundingGeometry> geoms;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double f = static_cast<double>(i) / 12.0;
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3) * (0.6 + 0.3 * f);
    geoms.emplace_back(std::vector<double>{1000, 600, 200}, std::vector<double>{400 + f, 401, 402 - f},
                       std::vector<double>{0.3 - 0.1 * f, 0.4, 0.3 + 0.1 * f}, a);
  }
  const std::vector<std::vector<Observation>> sets{obs};
  const std::vector<std::vector<SoundingGeometry>> gs{geoms};
  const auto p = fuse_day(concat_instruments(sets, gs), kGrid, Raster::filled(kGrid, 0), config());
  for (const auto& c : p.land.cells) {
    ASSERT_TRUE(c.geometry.has_value());
    double h = 0.0;
    for (double x : c.geometry->pwf()) h += x;
    EXPECT_NEAR(h, 1.0, 1e-9);
  }
}

TEST(FuseDay, MaskMustCoverGrid) {
  const GridSpec small(1.0, 0, 2, 0, 2, 0);
  EXPECT_THROW(fuse_day(meta_of({{}}), kGrid, Raster::filled(small, 0), config()), InputError);
}

TEST(EffectiveWeights, TrivialCases) {
  const std::vector<Observation> one{Observation(SpaceTimePoint::make(1, 1, 0.5), 400, 0.3)};
  const auto w1 = effective_weights(SpaceTimePoint::make(3, 3, 0.5), meta_of({one}), kLand, 10);
  ASSERT_EQ(w1.size(), 1u);
  EXPECT_NEAR(w1[0], 1.0, 1e-12);
  const std::vector<Observation> two{Observation(SpaceTimePoint::make(0, 1, 0.5), 400, 0.3),
                                     Observation(SpaceTimePoint::make(0, 3, 0.5), 402, 0.3)};
  const auto w2 = effective_weights(SpaceTimePoint::make(0, 2, 0.5), meta_of({two}), kLand, 10);
  EXPECT_NEAR(w2[0], 0.5, 1e-9);
  EXPECT_NEAR(w2[1], 0.5, 1e-9);
}

TEST(EffectiveWeights, SumToOneAndMatchDenseWhenSaturated) {
  const auto obs = scattered(15, 16);
  const auto cell = kGrid.cell_center(7);
  for (std::size_t m : {2u, 5u, 15u}) {
    const auto w = effective_weights(cell, meta_of({obs}), kLand, m);
    double s = 0.0;
    for (double x : w) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9);
    if (m == 15) {
      const auto o = oracle::ordinary_kriging(obs, cell, kLand);
      for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], o.weights(static_cast<int>(i)), 1e-9);
    }
  }
}

TEST(SampleRealizations, CountZeroAndDeterminism) {
  const SparsePrecision q(2, {{0, 0, 2.0}, {1, 0, -0.5}, {1, 1, 1.0}});
  const std::vector<double> mean{1.0, 2.0};
  EXPECT_TRUE(sample_realizations(mean, q, 0, 1).empty());
  const auto a = sample_realizations(mean, q, 50, 99);
  const auto b = sample_realizations(mean, q, 50, 99);
  ASSERT_EQ(a.size(), 50u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].size(), 2u);
  EXPECT_NE(a, sample_realizations(mean, q, 50, 100));
  EXPECT_THROW(sample_realizations(std::vector<double>{1.0}, q, 1, 1), InputError);
  const SparsePrecision bad(2, {{0, 0, 1.0}, {1, 0, 2.0}, {1, 1, 1.0}});
  EXPECT_THROW(sample_realizations(mean, bad, 1, 1), NumericalError);
}

TEST(SampleRealizations, MonteCarloCovarianceMatchesInverse) {
  // a compact cluster of cells conditioned on two distant soundings keeps the covariance well correlated
  const std::vector<Observation> obs{Observation(SpaceTimePoint::make(0.2, 0.3, 0.4), 401.0, 0.5),
                                     Observation(SpaceTimePoint::make(4.6, 4.1, 0.6), 399.0, 0.5)};
  std::vector<SpaceTimePoint> grid;
  for (int i = 0; i < 6; ++i) grid.push_back(SpaceTimePoint::make(2.0 + 0.3 * (i % 3), 2.0 + 0.3 * (i / 3), 0.5));
  const auto post = posterior_precision(obs, grid, kLand, 8);
  const Eigen::MatrixXd truth = post.precision.to_dense().inverse();
  const auto r = sample_realizations(post.mean, post.precision, 10000, 5);
  Eigen::MatrixXd x(10000, 6);
  for (int i = 0; i < 10000; ++i)
    for (int j = 0; j < 6; ++j) x(i, j) = r[i][j];
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd c = (x.rowwise() - mu).transpose() * (x.rowwise() - mu) / 9999.0;
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(mu(i), post.mean[i], 4.0 * std::sqrt(truth(i, i) / 10000.0));
    for (int j = 0; j < 6; ++j)
      if (std::abs(truth(i, j)) > 0.05 * kLand.sill()) {
        EXPECT_NEAR(c(i, j) / truth(i, j), 1.0, 0.05);
      }
  }
}
