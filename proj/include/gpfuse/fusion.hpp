/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "gpfuse/core_types.hpp"
#include "gpfuse/kriging.hpp"
#include "gpfuse/raster.hpp"
#include "gpfuse/rng.hpp"
#include "gpfuse/vecchia.hpp"

namespace gpfuse {

/// Observations from several instruments stacked into one dataset, block by block.
class MetaDataset {
 public:
  MetaDataset() = default;

  const std::vector<Observation>& observations() const { return obs_; }
  /// One entry per observation; empty when no instrument supplied geometries.
  const std::vector<std::optional<SoundingGeometry>>& geometries() const { return geom_; }
  const std::vector<std::size_t>& block_sizes() const { return blocks_; }
  std::size_t size() const { return obs_.size(); }

  friend MetaDataset concat_instruments(std::span<const std::vector<Observation>> datasets,
                                        std::span<const std::vector<SoundingGeometry>> geometries);

 private:
  std::vector<Observation> obs_;
  std::vector<std::optional<SoundingGeometry>> geom_;
  std::vector<std::size_t> blocks_;
};

/*! Order-preserving concatenation: instrument 1 block, then instrument 2, and so on.
 *
 * `geometries` is either empty or holds one vector per dataset, each
 * empty (no geometry for that instrument) or one geometry per observation.
 */
inline MetaDataset concat_instruments(std::span<const std::vector<Observation>> datasets,
                                      std::span<const std::vector<SoundingGeometry>> geometries) {
  if (datasets.empty()) throw InputError("concat_instruments needs at least one dataset");
  if (!geometries.empty() && geometries.size() != datasets.size())
    throw InputError("concat_instruments: geometry list count differs from dataset count");
  MetaDataset meta;
  bool any_geometry = false;
  for (std::size_t k = 0; k < geometries.size(); ++k) {
    if (!geometries[k].empty() && geometries[k].size() != datasets[k].size())
      throw InputError("concat_instruments: dataset " + std::to_string(k) + " has " +
                       std::to_string(datasets[k].size()) + " observations but " +
                       std::to_string(geometries[k].size()) + " geometries");
    any_geometry = any_geometry || !geometries[k].empty();
  }
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    meta.obs_.insert(meta.obs_.end(), datasets[k].begin(), datasets[k].end());
    meta.blocks_.push_back(datasets[k].size());
    if (!any_geometry) continue;
    for (std::size_t i = 0; i < datasets[k].size(); ++i) {
      if (geometries[k].empty()) meta.geom_.emplace_back(std::nullopt);
      else meta.geom_.emplace_back(geometries[k][i]);
    }
  }
  return meta;
}

inline MetaDataset concat_instruments(std::span<const std::vector<Observation>> datasets) {
  return concat_instruments(datasets, std::span<const std::vector<SoundingGeometry>>{});
}

/// Everything fuse_day needs besides the data; also the provenance of a product.
struct FusionConfig {
  KernelParams land;
  KernelParams ocean;
  std::size_t m = 10;
  OrderingMethod ordering = OrderingMethod::maxmin;
  /// Mean reported where a class has no usable observations.
  double prior_mean = 400.0;
  /// Observation exclusion radius per cell, in ranges.
  double truncation_ranges = 5.0;
  std::size_t gls_max = 500;
  std::uint64_t seed = 1;

  const KernelParams& params(SurfaceClass s) const { return s == SurfaceClass::land ? land : ocean; }

  PosteriorOptions posterior_options() const {
    PosteriorOptions o;
    o.m = m;
    o.ordering = ordering;
    o.prior_mean = prior_mean;
    o.truncation_ranges = truncation_ranges;
    o.gls_max = gls_max;
    return o;
  }
};

struct GriddedCellEstimate {
  std::size_t grid_index = 0;
  SpaceTimePoint center;
  double value = 0.0;
  double sd = 0.0;
  /// Absent for gap-filled cells with no observation inside the truncation window, or when inputs carry
  /// no geometries.
  std::optional<SoundingGeometry> geometry;
  std::size_t n_contributing = 0;
  SurfaceClass surface = SurfaceClass::land;
};

struct ClassProduct {
  SurfaceClass surface = SurfaceClass::land;
  std::vector<GriddedCellEstimate> cells;
  /// Indexed like `cells`.
  SparsePrecision precision;
  std::size_t n_obs = 0;
  double mean_estimate = 0.0;
  std::string mean_method;
  bool prior_only = false;
};

struct DailyProduct {
  int day = 0;
  GridSpec grid;
  FusionConfig config;
  ClassProduct land;
  ClassProduct ocean;
  std::vector<std::string> warnings;

  const ClassProduct& product(SurfaceClass s) const { return s == SurfaceClass::land ? land : ocean; }
};

namespace detail {

inline bool within_window(const SpaceTimePoint& a, const SpaceTimePoint& b, const KernelParams& p, double ranges) {
  return great_circle_km(a, b) <= ranges * p.spatial_range_km() &&
         std::abs(a.time() - b.time()) <= ranges * p.temporal_range_days();
}

}  // namespace detail

/*! Fuses one day of observations onto a grid, separately for land and ocean.
 *
 * Only quality-flagged observations are used, and each class sees only
 * its own observations and cells, so the two halves never interact.
 */
inline DailyProduct fuse_day(const MetaDataset& meta, const GridSpec& grid, const Raster& mask,
                             const FusionConfig& config) {
  DailyProduct out;
  out.day = grid.day();
  out.grid = grid;
  out.config = config;

  std::vector<std::size_t> cells_of[2];
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const SpaceTimePoint p = grid.cell_center(c);
    const auto code = mask.value_at(p.lat(), p.lon());
    if (!code)
      throw InputError("surface mask does not cover grid cell " + std::to_string(c) + " at (" + detail::num(p.lat()) +
                       ", " + detail::num(p.lon()) + ")");
    cells_of[static_cast<int>(surface_from_code(*code))].push_back(c);
  }

  const auto& all = meta.observations();
  const bool have_geometry = !meta.geometries().empty();
  for (SurfaceClass s : {SurfaceClass::land, SurfaceClass::ocean}) {
    ClassProduct& cp = s == SurfaceClass::land ? out.land : out.ocean;
    cp.surface = s;
    const auto& cells = cells_of[static_cast<int>(s)];
    const KernelParams& params = config.params(s);

    std::vector<Observation> obs;
    std::vector<const SoundingGeometry*> geom;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (!all[i].quality_flag() || all[i].surface() != s) continue;
      obs.push_back(all[i]);
      geom.push_back(have_geometry && meta.geometries()[i] ? &*meta.geometries()[i] : nullptr);
    }
    cp.n_obs = obs.size();
    if (cells.empty()) {
      cp.precision = SparsePrecision(0, {});
      cp.mean_method = "unused";
      cp.mean_estimate = config.prior_mean;
      continue;
    }
    if (obs.empty()) {
      cp.prior_only = true;
      out.warnings.push_back(std::string("no ") + std::string(to_string(s)) +
                             " observations after quality filtering; " + std::string(to_string(s)) +
                             " cells carry prior-only estimates");
    }

    std::vector<SpaceTimePoint> centers;
    centers.reserve(cells.size());
    for (std::size_t c : cells) centers.push_back(grid.cell_center(c));
    const VecchiaPosterior post = posterior_precision(obs, centers, params, config.posterior_options());
    cp.precision = post.precision;
    cp.mean_estimate = post.mean_estimate;
    cp.mean_method = post.mean_method;

    const bool all_geometry = !obs.empty() && std::all_of(geom.begin(), geom.end(), [](auto g) { return g; });
    for (std::size_t k = 0; k < cells.size(); ++k) {
      GriddedCellEstimate e;
      e.grid_index = cells[k];
      e.center = centers[k];
      e.value = post.mean[k];
      // With nothing to condition on the exact prior sd is known; the Vecchia marginal would only approximate it.
      e.sd = cp.prior_only ? std::sqrt(params.point_variance()) : std::sqrt(std::max(0.0, post.variance[k]));
      e.surface = s;
      for (const auto& o : obs)
        if (detail::within_window(o.point(), centers[k], params, config.truncation_ranges)) ++e.n_contributing;
      if (e.n_contributing > 0 && all_geometry) {
        const auto w = post.effective_weights(k);
        std::vector<double> wk;
        std::vector<SoundingGeometry> gk;
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (w[i] == 0.0) continue;
          wk.push_back(w[i]);
          gk.push_back(*geom[i]);
        }
        e.geometry = combine_ancillary(wk, gk);
      }
      cp.cells.push_back(std::move(e));
    }
  }
  return out;
}

/// Kriging coefficients of one prediction location over the given observations, in their input order.
inline std::vector<double> effective_weights(const SpaceTimePoint& cell, std::span<const Observation> obs,
                                             const KernelParams& params, const PosteriorOptions& options) {
  if (obs.empty()) return {};
  const std::vector<SpaceTimePoint> target{cell};
  return posterior_precision(obs, target, params, options).effective_weights(0);
}

inline std::vector<double> effective_weights(const SpaceTimePoint& cell, const MetaDataset& meta,
                                             const KernelParams& params, std::size_t m) {
  PosteriorOptions o;
  o.m = m;
  return effective_weights(cell, meta.observations(), params, o);
}

using Realizations = std::vector<std::vector<double>>;

/*! Draws mean + x with x ~ N(0, Q^{-1}) from a sparse precision Q.
 *
 * With the fill-reducing factorization P Q P^T = L L^T, x = P^T L^{-T} M
 * for standard normal M has covariance Q^{-1}, so the covariance is never
 * formed. Realization r uses normals n*r .. n*r + n - 1 of the stream.
 */
inline Realizations sample_realizations(std::span<const double> mean, const SparsePrecision& precision,
                                        std::size_t count, std::uint64_t seed) {
  const std::size_t n = precision.dimension();
  if (mean.size() != n)
    throw InputError("sample_realizations: mean has " + std::to_string(mean.size()) + " entries, precision is " +
                     std::to_string(n) + "x" + std::to_string(n));
  Realizations out;
  if (count == 0 || n == 0) {
    out.assign(count, {});
    return out;
  }
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt(precision.to_sparse());
  if (llt.info() != Eigen::Success)
    throw NumericalError("sample_realizations: precision matrix is not positive definite (factorization failed)");
  Rng rng(seed);
  Eigen::VectorXd m(static_cast<Eigen::Index>(n));
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
    const Eigen::VectorXd y = llt.matrixU().solve(m);
    const Eigen::VectorXd x = llt.permutationPinv() * y;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = mean[i] + x(static_cast<Eigen::Index>(i));
    out.push_back(std::move(v));
  }
  return out;
}

/// Draws mean + chol(cov) M directly from a dense covariance.
inline Realizations sample_realizations_covariance(std::span<const double> mean, const Eigen::MatrixXd& cov,
                                                   std::size_t count, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(mean.size());
  if (cov.rows() != n || cov.cols() != n) throw InputError("sample_realizations_covariance: dimension mismatch");
  Realizations out;
  if (count == 0 || n == 0) {
    out.assign(count, {});
    return out;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance matrix is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  Rng rng(seed);
  Eigen::VectorXd m(n);
  for (std::size_t r = 0; r < count; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) m(i) = rng.normal();
    const Eigen::VectorXd x = l * m;
    std::vector<double> v(mean.size());
    for (Eigen::Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = mean[static_cast<std::size_t>(i)] + x(i);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace gpfuse
