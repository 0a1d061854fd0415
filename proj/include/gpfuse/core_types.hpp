/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gpfuse/errors.hpp"

namespace gpfuse {

// Units: ppm for mixing ratios, km for spatial ranges, days for time, hPa for pressure.
inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

/*! A location in space and time.
 *
 * Latitude in degrees [-90, 90], longitude in degrees [-180, 180),
 * time in fractional days since the configured epoch. The only way to
 * obtain a value is through normalization, so stored coordinates always
 * satisfy the ranges above.
 */
class SpaceTimePoint {
 public:
  SpaceTimePoint() = default;

  /// Validates and normalizes. Longitudes already in range are kept bit-identical.
  static SpaceTimePoint make(double lat, double lon, double time) {
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0)
      throw InputError("latitude " + detail::num(lat) + " outside [-90, 90]");
    if (!std::isfinite(lon))
      throw InputError("longitude is not finite");
    if (!std::isfinite(time))
      throw InputError("time is not finite");
    return SpaceTimePoint(lat, wrap_longitude(lon), time);
  }

  static double wrap_longitude(double lon) {
    if (lon >= -180.0 && lon < 180.0) return lon;
    double w = std::fmod(lon + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    w -= 180.0;
    // fmod rounding can land exactly on +180
    if (w >= 180.0) w -= 360.0;
    return w;
  }

  double lat() const { return lat_; }
  double lon() const { return lon_; }
  double time() const { return time_; }

  /// Earth-centred unit vector, cached so distance evaluations need no per-pair trigonometry.
  const std::array<double, 3>& unit() const { return unit_; }

  friend bool operator==(const SpaceTimePoint& a, const SpaceTimePoint& b) {
    return a.lat_ == b.lat_ && a.lon_ == b.lon_ && a.time_ == b.time_;
  }

 private:
  SpaceTimePoint(double lat, double lon, double time) : lat_(lat), lon_(lon), time_(time) {
    constexpr double deg = kPi / 180.0;
    const double cl = std::cos(lat * deg);
    unit_ = {cl * std::cos(lon * deg), cl * std::sin(lon * deg), std::sin(lat * deg)};
  }

  double lat_ = 0.0;
  double lon_ = 0.0;
  double time_ = 0.0;
  std::array<double, 3> unit_{1.0, 0.0, 0.0};
};

inline SpaceTimePoint normalize_point(double lat, double lon, double time) {
  return SpaceTimePoint::make(lat, lon, time);
}

enum class SurfaceClass : std::uint8_t { land = 0, ocean = 1 };

inline std::string_view to_string(SurfaceClass s) {
  return s == SurfaceClass::land ? "land" : "ocean";
}

inline SurfaceClass parse_surface(std::string_view s) {
  if (s == "land") return SurfaceClass::land;
  if (s == "ocean") return SurfaceClass::ocean;
  throw InputError("unknown surface class '" + std::string(s) + "' (expected land or ocean)");
}

/*! One point measurement.
 *
 * noise_sd may be zero so that exact-interpolation limits can be expressed;
 * the observation file reader insists on strictly positive noise.
 */
class Observation {
 public:
  Observation() = default;
  Observation(SpaceTimePoint point, double value, double noise_sd, int instrument_id = 1,
              bool quality_flag = true, SurfaceClass surface = SurfaceClass::land)
      : point_(point),
        value_(value),
        noise_sd_(noise_sd),
        instrument_id_(instrument_id),
        quality_flag_(quality_flag),
        surface_(surface) {
    if (!std::isfinite(value)) throw InputError("observation value is not finite");
    if (!std::isfinite(noise_sd) || noise_sd < 0.0)
      throw InputError("observation noise_sd " + detail::num(noise_sd) + " must be >= 0");
  }

  const SpaceTimePoint& point() const { return point_; }
  double value() const { return value_; }
  double noise_sd() const { return noise_sd_; }
  int instrument_id() const { return instrument_id_; }
  bool quality_flag() const { return quality_flag_; }
  SurfaceClass surface() const { return surface_; }

  Observation with_value(double v) const {
    return Observation(point_, v, noise_sd_, instrument_id_, quality_flag_, surface_);
  }

  friend bool operator==(const Observation&, const Observation&) = default;

 private:
  SpaceTimePoint point_;
  double value_ = 0.0;
  double noise_sd_ = 0.0;
  int instrument_id_ = 1;
  bool quality_flag_ = true;
  SurfaceClass surface_ = SurfaceClass::land;
};

/*! Retrieval geometry of one sounding: pressure grid, prior profile,
 *  pressure weighting function and averaging kernel.
 */
class SoundingGeometry {
 public:
  SoundingGeometry() = default;

  SoundingGeometry(std::vector<double> pressure, std::vector<double> prior, std::vector<double> pwf,
                   Eigen::MatrixXd averaging_kernel)
      : pressure_(std::move(pressure)),
        prior_(std::move(prior)),
        pwf_(std::move(pwf)),
        ak_(std::move(averaging_kernel)) {
    const std::size_t n = pressure_.size();
    if (n == 0) throw InputError("sounding geometry needs at least one level");
    if (prior_.size() != n || pwf_.size() != n)
      throw InputError("sounding geometry: prior/pwf length differs from pressure grid length " +
                       std::to_string(n));
    if (static_cast<std::size_t>(ak_.rows()) != n || static_cast<std::size_t>(ak_.cols()) != n)
      throw InputError("sounding geometry: averaging kernel must be " + std::to_string(n) + "x" +
                       std::to_string(n));
    for (std::size_t i = 1; i < n; ++i) {
      const bool up = pressure_[1] > pressure_[0];
      const bool ok = up ? pressure_[i] > pressure_[i - 1] : pressure_[i] < pressure_[i - 1];
      if (!ok) throw InputError("sounding geometry: pressure grid is not strictly monotone");
    }
    double sum = 0.0;
    for (double h : pwf_) sum += h;
    if (std::abs(sum - 1.0) > 1e-10)
      throw InputError("sounding geometry: pressure weighting function sums to " +
                       detail::num(sum) + ", expected 1");
    for (double v : prior_)
      if (!std::isfinite(v)) throw InputError("sounding geometry: non-finite prior value");
    if (!ak_.allFinite()) throw InputError("sounding geometry: non-finite averaging kernel");
  }

  /// Products often ship the averaging kernel as a per-level vector; expand it to a diagonal matrix.
  static SoundingGeometry with_diagonal_kernel(std::vector<double> pressure, std::vector<double> prior,
                                               std::vector<double> pwf,
                                               const std::vector<double>& ak_diagonal) {
    Eigen::MatrixXd ak = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ak_diagonal.size()),
                                               static_cast<Eigen::Index>(ak_diagonal.size()));
    for (std::size_t i = 0; i < ak_diagonal.size(); ++i)
      ak(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = ak_diagonal[i];
    return SoundingGeometry(std::move(pressure), std::move(prior), std::move(pwf), std::move(ak));
  }

  std::size_t n_levels() const { return pressure_.size(); }
  const std::vector<double>& pressure() const { return pressure_; }
  const std::vector<double>& prior() const { return prior_; }
  const std::vector<double>& pwf() const { return pwf_; }
  const Eigen::MatrixXd& averaging_kernel() const { return ak_; }

  /// Column the retrieval would report if the true profile equalled the prior (h^T x_a).
  double prior_column() const {
    double s = 0.0;
    for (std::size_t i = 0; i < pwf_.size(); ++i) s += pwf_[i] * prior_[i];
    return s;
  }

  friend bool operator==(const SoundingGeometry& a, const SoundingGeometry& b) {
    return a.pressure_ == b.pressure_ && a.prior_ == b.prior_ && a.pwf_ == b.pwf_ &&
           a.ak_.rows() == b.ak_.rows() && a.ak_.cols() == b.ak_.cols() && a.ak_ == b.ak_;
  }

 private:
  std::vector<double> pressure_;
  std::vector<double> prior_;
  std::vector<double> pwf_;
  Eigen::MatrixXd ak_;
};

enum class KernelFamily : std::uint8_t { exponential, matern32 };

inline std::string_view to_string(KernelFamily f) {
  return f == KernelFamily::exponential ? "exponential" : "matern32";
}

inline KernelFamily parse_kernel_family(std::string_view s) {
  if (s == "exponential") return KernelFamily::exponential;
  if (s == "matern32") return KernelFamily::matern32;
  throw InputError("unknown kernel family '" + std::string(s) + "' (expected exponential or matern32)");
}

/// Space-time covariance parameters. Anisotropy is carried by the two ranges.
class KernelParams {
 public:
  KernelParams() = default;
  KernelParams(KernelFamily family, double sill, double spatial_range_km, double temporal_range_days,
               double nugget)
      : family_(family),
        sill_(sill),
        spatial_range_(spatial_range_km),
        temporal_range_(temporal_range_days),
        nugget_(nugget) {
    if (!(sill > 0.0) || !std::isfinite(sill)) throw InputError("kernel sill must be > 0");
    if (!(spatial_range_km > 0.0) || !std::isfinite(spatial_range_km))
      throw InputError("kernel spatial range must be > 0");
    if (!(temporal_range_days > 0.0) || !std::isfinite(temporal_range_days))
      throw InputError("kernel temporal range must be > 0");
    if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw InputError("kernel nugget must be >= 0");
  }

  KernelFamily family() const { return family_; }
  double sill() const { return sill_; }
  double spatial_range_km() const { return spatial_range_; }
  double temporal_range_days() const { return temporal_range_; }
  double nugget() const { return nugget_; }
  /// Marginal variance of the latent value at a new location.
  double point_variance() const { return sill_ + nugget_; }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;

 private:
  KernelFamily family_ = KernelFamily::exponential;
  double sill_ = 1.0;
  double spatial_range_ = 500.0;
  double temporal_range_ = 1.0;
  double nugget_ = 0.0;
};

/*! Regular latitude/longitude grid for one day.
 *
 * Cells are indexed row-major: latitude rows ascending from lat_min,
 * longitude ascending from lon_min within a row. The prediction location
 * of a cell is its center at mid-day (day + 0.5).
 */
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(double cell_size, double lat_min, double lat_max, double lon_min, double lon_max, int day)
      : cell_(cell_size), lat_min_(lat_min), lat_max_(lat_max), lon_min_(lon_min), lon_max_(lon_max), day_(day) {
    if (!(cell_size > 0.0)) throw InputError("grid cell size must be > 0");
    if (lat_min < -90.0 || lat_max > 90.0 || !(lat_max > lat_min))
      throw InputError("grid latitude extent must satisfy -90 <= lat_min < lat_max <= 90");
    if (lon_min < -180.0 || lon_max > 180.0 || !(lon_max > lon_min))
      throw InputError("grid longitude extent must satisfy -180 <= lon_min < lon_max <= 180");
    n_lat_ = divide_evenly(lat_max - lat_min, "latitude");
    n_lon_ = divide_evenly(lon_max - lon_min, "longitude");
  }

  double cell_size() const { return cell_; }
  double lat_min() const { return lat_min_; }
  double lat_max() const { return lat_max_; }
  double lon_min() const { return lon_min_; }
  double lon_max() const { return lon_max_; }
  int day() const { return day_; }
  std::size_t n_lat() const { return n_lat_; }
  std::size_t n_lon() const { return n_lon_; }
  std::size_t size() const { return n_lat_ * n_lon_; }

  SpaceTimePoint cell_center(std::size_t index) const {
    const std::size_t r = index / n_lon_;
    const std::size_t c = index % n_lon_;
    return SpaceTimePoint::make(lat_min_ + (static_cast<double>(r) + 0.5) * cell_,
                                lon_min_ + (static_cast<double>(c) + 0.5) * cell_, day_ + 0.5);
  }

  /// Cell containing (lat, lon), if inside the extent. Upper edges belong to the last cell.
  std::optional<std::size_t> cell_of(double lat, double lon) const {
    if (lat < lat_min_ || lat > lat_max_ || lon < lon_min_ || lon > lon_max_) return std::nullopt;
    auto r = static_cast<std::size_t>(std::floor((lat - lat_min_) / cell_));
    auto c = static_cast<std::size_t>(std::floor((lon - lon_min_) / cell_));
    if (r >= n_lat_) r = n_lat_ - 1;
    if (c >= n_lon_) c = n_lon_ - 1;
    return r * n_lon_ + c;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  std::size_t divide_evenly(double extent, const char* what) const {
    const double k = extent / cell_;
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-9 * std::max(1.0, kr) || kr < 1.0)
      throw InputError(std::string("grid cell size does not divide the ") + what + " extent evenly");
    return static_cast<std::size_t>(kr);
  }

  double cell_ = 1.0;
  double lat_min_ = -90.0, lat_max_ = 90.0;
  double lon_min_ = -180.0, lon_max_ = 180.0;
  int day_ = 0;
  std::size_t n_lat_ = 180, n_lon_ = 360;
};

}  // namespace gpfuse
