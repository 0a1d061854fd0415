/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "gpfuse/core_types.hpp"

namespace gpfuse {

/// Unitless separation: sqrt((great-circle km / spatial_range)^2 + (dt / temporal_range)^2).
class ScaledDistance {
 public:
  explicit ScaledDistance(double d) : d_(d) {
    if (!(d >= 0.0)) throw InputError("scaled distance must be >= 0");
  }
  double value() const { return d_; }

 private:
  double d_;
};

/// Great-circle distance on the spherical Earth.
inline double great_circle_km(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  const auto& u = a.unit();
  const auto& v = b.unit();
  const double dx = u[0] - v[0], dy = u[1] - v[1], dz = u[2] - v[2];
  const double half_chord = 0.5 * std::sqrt(dx * dx + dy * dy + dz * dz);
  if (half_chord < 0.7) return 2.0 * kEarthRadiusKm * std::asin(half_chord);
  // asin loses accuracy towards the antipode; atan2 of cross and dot products does not
  const double cx = u[1] * v[2] - u[2] * v[1];
  const double cy = u[2] * v[0] - u[0] * v[2];
  const double cz = u[0] * v[1] - u[1] * v[0];
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return kEarthRadiusKm * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

inline double scaled_distance_value(const SpaceTimePoint& a, const SpaceTimePoint& b,
                                    const KernelParams& params) {
  const double ds = great_circle_km(a, b) / params.spatial_range_km();
  const double dt = std::abs(b.time() - a.time()) / params.temporal_range_days();
  return std::sqrt(ds * ds + dt * dt);
}

inline ScaledDistance scaled_distance(const SpaceTimePoint& a, const SpaceTimePoint& b,
                                      const KernelParams& params) {
  return ScaledDistance(scaled_distance_value(a, b, params));
}

inline double correlation(KernelFamily family, double d) {
  switch (family) {
    case KernelFamily::exponential:
      return std::exp(-d);
    case KernelFamily::matern32: {
      const double s = std::sqrt(3.0) * d;
      return (1.0 + s) * std::exp(-s);
    }
  }
  return 0.0;
}

/// Latent-process covariance at separation d (nugget excluded).
inline double kernel_value(const KernelParams& params, ScaledDistance d) {
  return params.sill() * correlation(params.family(), d.value());
}

inline double kernel_between(const SpaceTimePoint& a, const SpaceTimePoint& b, const KernelParams& params) {
  return params.sill() * correlation(params.family(), scaled_distance_value(a, b, params));
}

namespace detail {

inline void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " has non-finite entries");
}

}  // namespace detail

/*! Covariance of a point set with itself.
 *
 * The diagonal carries sill + nugget, plus noise_sd^2 when per-point noise
 * is given. The matrix is filled from the upper triangle and mirrored, so
 * it is exactly symmetric.
 */
inline Eigen::MatrixXd build_cov(std::span<const SpaceTimePoint> points, const KernelParams& params,
                                 std::span<const double> noise_sd = {}) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (!noise_sd.empty() && noise_sd.size() != points.size())
    throw InputError("build_cov: noise vector length differs from point count");
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = params.sill() + params.nugget();
    if (!noise_sd.empty()) diag += noise_sd[i] * noise_sd[i];
    c(i, i) = diag;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_between(points[i], points[j], params);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  detail::check_finite(c, "covariance matrix");
  return c;
}

/// Cross-covariance between two point sets; no nugget or noise (distinct random variables).
inline Eigen::MatrixXd build_cross_cov(std::span<const SpaceTimePoint> a, std::span<const SpaceTimePoint> b,
                                       const KernelParams& params) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel_between(a[i], b[j], params);
  detail::check_finite(c, "cross-covariance matrix");
  return c;
}

inline std::vector<SpaceTimePoint> points_of(std::span<const Observation> obs) {
  std::vector<SpaceTimePoint> p;
  p.reserve(obs.size());
  for (const auto& o : obs) p.push_back(o.point());
  return p;
}

inline std::vector<double> noise_of(std::span<const Observation> obs) {
  std::vector<double> s;
  s.reserve(obs.size());
  for (const auto& o : obs) s.push_back(o.noise_sd());
  return s;
}

inline Eigen::VectorXd values_of(std::span<const Observation> obs) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) z(static_cast<Eigen::Index>(i)) = obs[i].value();
  return z;
}

}  // namespace gpfuse
