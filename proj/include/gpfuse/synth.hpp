/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpfuse/core_types.hpp"
#include "gpfuse/covariance.hpp"
#include "gpfuse/rng.hpp"
#include "gpfuse/validation.hpp"

namespace gpfuse {

struct VarianceComponents {
  double mu = 0.0;
  double sigma_alpha = 0.0;
  double sigma_gamma = 0.0;
  double sigma_eps = 0.0;
};

/*! Synthetic validation scenario.
 *
 * Sounding truth differs from the station truth by a co-location field
 * made of a fixed offset per station and a transient per station-day; the
 * model columns reproduce that field exactly. The prior column is the
 * station truth plus a per-station offset and a per-station-day term, so
 * it is constant within each coincidence.
 */
struct ScenarioConfig {
  std::size_t stations = 10;
  std::size_t days = 20;
  std::size_t per_day = 20;
  VarianceComponents components;
  double validation_sd = 0.0;
  double kappa_sd = 0.02;
  double colocation_station_sd = 0.0;
  double colocation_day_sd = 0.0;
  double prior_station_sd = 0.0;
  double prior_day_sd = 0.0;
  double truth_level = 400.0;
  double truth_day_sd = 1.0;
  /// Levels of the synthetic retrieval geometry; 0 leaves soundings without geometry.
  std::size_t geometry_levels = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (stations < 1 || days < 1 || per_day < 1) throw InputError("scenario counts must be >= 1");
    const auto& c = components;
    for (double s : {c.sigma_alpha, c.sigma_gamma, c.sigma_eps, validation_sd, kappa_sd, colocation_station_sd,
                     colocation_day_sd, prior_station_sd, prior_day_sd, truth_day_sd})
      if (!(s >= 0.0)) throw InputError("scenario standard deviations must be >= 0");
  }
};

struct ScenarioTruth {
  double mu = 0.0;
  std::vector<double> alpha;
  /// Expected systematic and random errors: sqrt(sigma_alpha^2 + sigma_gamma^2) and sigma_eps.
  double systematic = 0.0;
  double random = 0.0;
};

struct Scenario {
  std::vector<Matchup> matchups;
  ScenarioTruth truth;
};

/// Pressure grid, uniform weights, identity kernel and a constant prior profile.
inline SoundingGeometry synthetic_geometry(std::size_t levels, double prior_value) {
  std::vector<double> p(levels), xa(levels, prior_value), h(levels, 1.0 / static_cast<double>(levels));
  for (std::size_t l = 0; l < levels; ++l) p[l] = 1000.0 - 900.0 * static_cast<double>(l) / static_cast<double>(levels);
  // equal weights may not sum to one exactly in floating point; put the remainder on the last level
  double s = 0.0;
  for (std::size_t l = 0; l + 1 < levels; ++l) s += h[l];
  h[levels - 1] = 1.0 - s;
  return SoundingGeometry(std::move(p), std::move(xa), std::move(h),
                          Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(levels), static_cast<Eigen::Index>(levels)));
}

namespace detail {

/// Per-sounding draws, made in one fixed order so matchups and files agree.
struct ScenarioDraw {
  std::size_t station, day;
  double x_station;         // x_jk
  double x_sounding;        // x_ijk
  double value;             // x-hat
  double reference_column;  // x_jk + eps*_val
  double kappa;
  double prior;
};

template <class Visit>
ScenarioTruth draw_scenario(const ScenarioConfig& cfg, Visit&& visit) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto& c = cfg.components;
  ScenarioTruth truth;
  truth.mu = c.mu;
  truth.systematic = std::sqrt(c.sigma_alpha * c.sigma_alpha + c.sigma_gamma * c.sigma_gamma);
  truth.random = c.sigma_eps;
  for (std::size_t j = 0; j < cfg.stations; ++j) {
    const double alpha = rng.normal(0.0, c.sigma_alpha);
    const double coloc_j = rng.normal(0.0, cfg.colocation_station_sd);
    const double prior_j = rng.normal(0.0, cfg.prior_station_sd);
    truth.alpha.push_back(alpha);
    for (std::size_t k = 0; k < cfg.days; ++k) {
      const double x_jk = cfg.truth_level + rng.normal(0.0, cfg.truth_day_sd);
      const double gamma = rng.normal(0.0, c.sigma_gamma);
      const double coloc_jk = rng.normal(0.0, cfg.colocation_day_sd);
      const double val = rng.normal(0.0, cfg.validation_sd);
      const double prior_jk = rng.normal(0.0, cfg.prior_day_sd);
      for (std::size_t i = 0; i < cfg.per_day; ++i) {
        const double eps = rng.normal(0.0, c.sigma_eps);
        const double kappa = rng.normal(0.0, cfg.kappa_sd);
        ScenarioDraw d;
        d.station = j;
        d.day = k;
        d.x_station = x_jk;
        d.x_sounding = x_jk + coloc_j + coloc_jk;
        d.value = d.x_sounding + c.mu + alpha + gamma + eps;
        d.reference_column = x_jk + val;
        d.kappa = kappa;
        d.prior = x_jk + prior_j + prior_jk;
        visit(d);
      }
    }
  }
  return truth;
}

}  // namespace detail

/// Matchups realizing the hierarchical error model directly (no spatial matching step).
inline Scenario simulate_hierarchical(const ScenarioConfig& cfg) {
  Scenario sc;
  std::size_t count = 0;
  sc.truth = detail::draw_scenario(cfg, [&](const detail::ScenarioDraw& d) {
    const int station = static_cast<int>(d.station);
    const int day = static_cast<int>(d.day);
    if (sc.matchups.empty() || sc.matchups.back().station != station || sc.matchups.back().day != day) {
      Matchup mu;
      mu.station = station;
      mu.day = day;
      mu.reference_time = day + 0.53125;
      mu.station_column = d.reference_column;
      sc.matchups.push_back(std::move(mu));
    }
    MatchedSounding m;
    m.index = count++;
    m.time = day + 0.53125;
    m.value = d.value;
    m.reference = d.reference_column + d.kappa;
    m.model = d.x_sounding;
    m.model_reference = d.x_station;
    m.prior = d.prior;
    sc.matchups.back().members.push_back(m);
  });
  return sc;
}

/// Synthetic scenario as product soundings and station records that match_coincidences turns back into matchups.
struct ScenarioFiles {
  std::vector<ProductSounding> soundings;
  std::vector<StationRecord> stations;
  ScenarioTruth truth;
};

/// Station j sits on a lattice of 10 per row, 4 deg apart in latitude and 6 deg in longitude.
inline std::pair<double, double> scenario_station_location(std::size_t j) {
  return {4.0 * static_cast<double>(j / 10), 6.0 * static_cast<double>(j % 10)};
}

/*! File form of a scenario.
 *
 * Stations sit on a lattice whose coincidence boxes do not overlap. Each
 * station reports six 15-minute samples from 12:00 to 13:15 every day, so
 * the only usable 90-minute average is centred on 12:45; soundings fall
 * within 30 minutes of it and inside the coincidence box. The station
 * reference is shared by all soundings of a coincidence, so kappa is not
 * represented here.
 */
inline ScenarioFiles simulate_files(const ScenarioConfig& cfg) {
  if (cfg.stations > 150) throw InputError("file scenarios support at most 150 stations");
  ScenarioFiles f;
  Rng place(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<StationSample>> samples(cfg.stations);
  std::size_t last_day = SIZE_MAX, last_station = SIZE_MAX;
  f.truth = detail::draw_scenario(cfg, [&](const detail::ScenarioDraw& d) {
    const auto [slat, slon] = scenario_station_location(d.station);
    if (d.station != last_station || d.day != last_day) {
      for (int q = 0; q < 6; ++q)
        samples[d.station].push_back({static_cast<double>(d.day) + (12.0 + 0.25 * q) / 24.0, d.reference_column,
                                      d.x_station});
      last_station = d.station;
      last_day = d.day;
    }
    const double lat = slat + (2.0 * place.uniform() - 1.0) * 1.4;
    const double lon = slon + (2.0 * place.uniform() - 1.0) * 2.4;
    const double t = static_cast<double>(d.day) + (12.75 + (2.0 * place.uniform() - 1.0) * 0.5) / 24.0;
    const double noise = cfg.components.sigma_eps > 0.0 ? cfg.components.sigma_eps : 1.0;
    ProductSounding ps{Observation(SpaceTimePoint::make(lat, lon, t), d.value, noise), std::nullopt, d.x_sounding,
                       d.prior};
    if (cfg.geometry_levels > 0) ps.geometry = synthetic_geometry(cfg.geometry_levels, d.prior);
    f.soundings.push_back(std::move(ps));
  });
  for (std::size_t j = 0; j < cfg.stations; ++j) {
    const auto [slat, slon] = scenario_station_location(j);
    f.stations.emplace_back(static_cast<int>(j), slat, slon, std::move(samples[j]));
  }
  return f;
}

/// Exact draw of a Gaussian-process field (nugget included) by dense Cholesky.
inline std::vector<double> simulate_gp_field(std::span<const SpaceTimePoint> points, const KernelParams& params,
                                             double mean, std::uint64_t seed) {
  if (points.empty()) throw InputError("simulate_gp_field needs at least one point");
  if (points.size() > 2000)
    throw InputError("simulate_gp_field draws exactly only up to 2000 points; generate larger fields in tiles");
  const Eigen::MatrixXd c = build_cov(points, params);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd loaded = c;
    loaded.diagonal().array() += 1e-10 * params.sill();
    llt.compute(loaded);
    if (llt.info() != Eigen::Success) throw NumericalError("simulate_gp_field: covariance factorization failed");
  }
  Rng rng(seed);
  Eigen::VectorXd z(c.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  const Eigen::VectorXd x = llt.matrixL() * z;
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean + x(static_cast<Eigen::Index>(i));
  return out;
}

/// Uniformly scattered points in a lat/lon box over [t0, t1).
inline std::vector<SpaceTimePoint> random_points(std::size_t n, double lat0, double lat1, double lon0, double lon1,
                                                 double t0, double t1, Rng& rng) {
  std::vector<SpaceTimePoint> p;
  p.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    p.push_back(SpaceTimePoint::make(lat0 + (lat1 - lat0) * rng.uniform(), lon0 + (lon1 - lon0) * rng.uniform(),
                                     t0 + (t1 - t0) * rng.uniform()));
  return p;
}

/// Noisy observations of one GP draw at random points: the synthetic fusion day.
inline std::vector<Observation> simulate_gp_observations(std::size_t n, const GridSpec& grid, const KernelParams& params,
                                                         double mean, double noise_sd, std::uint64_t seed) {
  Rng rng(seed);
  const auto pts = random_points(n, grid.lat_min(), grid.lat_max(), grid.lon_min(), grid.lon_max(), grid.day(),
                                 grid.day() + 1.0, rng);
  const auto field = simulate_gp_field(pts, params, mean, seed + 1);
  std::vector<Observation> obs;
  obs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) obs.emplace_back(pts[i], field[i] + rng.normal(0.0, noise_sd), noise_sd);
  return obs;
}

}  // namespace gpfuse
