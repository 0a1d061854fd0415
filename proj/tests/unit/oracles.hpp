/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

// Reference computations written independently of the library: haversine
// distances, explicit matrix inverses and the augmented kriging system
// solved by full-pivot LU. Slow on purpose.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gpfuse/core_types.hpp"

namespace oracle {

using gpfuse::KernelFamily;
using gpfuse::KernelParams;
using gpfuse::Observation;
using gpfuse::SpaceTimePoint;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = M_PI / 180.0;
  const double a = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
  return 2.0 * 6371.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double scaled(const SpaceTimePoint& a, const SpaceTimePoint& b, const KernelParams& k) {
  const double ds = haversine_km(a.lat(), a.lon(), b.lat(), b.lon()) / k.spatial_range_km();
  const double dt = (a.time() - b.time()) / k.temporal_range_days();
  return std::hypot(ds, dt);
}

inline double corr(KernelFamily f, double d) {
  if (f == KernelFamily::exponential) return std::exp(-d);
  return (1 + std::sqrt(3.0) * d) * std::exp(-std::sqrt(3.0) * d);
}

inline double cov(const SpaceTimePoint& a, const SpaceTimePoint& b, const KernelParams& k) {
  return k.sill() * corr(k.family(), scaled(a, b, k));
}

/// Same-set covariance: nugget on the diagonal, plus noise^2 when given.
inline Eigen::MatrixXd cov_matrix(const std::vector<SpaceTimePoint>& p, const KernelParams& k,
                                  const std::vector<double>& noise = {}) {
  const int n = static_cast<int>(p.size());
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = i == j ? k.sill() + k.nugget() : cov(p[i], p[j], k);
  for (int i = 0; i < static_cast<int>(noise.size()); ++i) c(i, i) += noise[i] * noise[i];
  return c;
}

inline std::vector<SpaceTimePoint> points(const std::vector<Observation>& obs) {
  std::vector<SpaceTimePoint> p;
  for (const auto& o : obs) p.push_back(o.point());
  return p;
}

inline std::vector<double> noise(const std::vector<Observation>& obs) {
  std::vector<double> p;
  for (const auto& o : obs) p.push_back(o.noise_sd());
  return p;
}

inline Eigen::VectorXd values(const std::vector<Observation>& obs) {
  Eigen::VectorXd z(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) z(static_cast<int>(i)) = obs[i].value();
  return z;
}

struct Kriging {
  Eigen::VectorXd weights;
  double lagrange = 0.0;
  double prediction = 0.0;
  double variance = 0.0;
};

/// The (p+1)x(p+1) saddle system [C 1; 1' 0][a; -lambda] = [c0; 1], solved directly.
inline Kriging ordinary_kriging(const std::vector<Observation>& obs, const SpaceTimePoint& target,
                                const KernelParams& k) {
  const int p = static_cast<int>(obs.size());
  const Eigen::MatrixXd c = cov_matrix(points(obs), k, noise(obs));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p + 1, p + 1);
  a.topLeftCorner(p, p) = c;
  a.block(0, p, p, 1).setOnes();
  a.block(p, 0, 1, p).setOnes();
  Eigen::VectorXd rhs(p + 1), c0(p);
  for (int i = 0; i < p; ++i) c0(i) = cov(obs[i].point(), target, k);
  rhs << c0, 1.0;
  const Eigen::VectorXd x = a.fullPivLu().solve(rhs);
  Kriging out;
  out.weights = x.head(p);
  out.lagrange = x(p);
  out.prediction = out.weights.dot(values(obs));
  out.variance = k.point_variance() - 2 * out.weights.dot(c0) + out.weights.dot(c * out.weights);
  return out;
}

inline double gls_mean(const std::vector<Observation>& obs, const KernelParams& k) {
  const Eigen::MatrixXd ci = cov_matrix(points(obs), k, noise(obs)).inverse();
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<int>(obs.size()));
  return one.dot(ci * values(obs)) / one.dot(ci * one);
}

struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Y(grid) | z with a known constant mean, by explicit inverse.
inline Conditional conditional(const std::vector<Observation>& obs, const std::vector<SpaceTimePoint>& grid,
                               const KernelParams& k, double mean) {
  const int p = static_cast<int>(obs.size());
  const int g = static_cast<int>(grid.size());
  Eigen::MatrixXd cgg = cov_matrix(grid, k);
  Conditional out;
  if (p == 0) {
    out.mean = Eigen::VectorXd::Constant(g, mean);
    out.cov = cgg;
    return out;
  }
  Eigen::MatrixXd cog(p, g);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < g; ++j) cog(i, j) = cov(obs[i].point(), grid[j], k);
  const Eigen::MatrixXd ci = cov_matrix(points(obs), k, noise(obs)).inverse();
  out.mean = (cog.transpose() * ci * (values(obs).array() - mean).matrix()).array() + mean;
  out.cov = cgg - cog.transpose() * ci * cog;
  return out;
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

/// Random observations in a small box so that kernels stay well correlated.
inline std::vector<Observation> random_obs(std::size_t n, std::mt19937_64& rng, double noise_sd = 0.3,
                                           double box = 5.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < n; ++i)
    obs.emplace_back(SpaceTimePoint::make(u(rng) * box, u(rng) * box, u(rng)), 400.0 + 2.0 * u(rng), noise_sd);
  return obs;
}

inline std::vector<SpaceTimePoint> random_points(std::size_t n, std::mt19937_64& rng, double box = 5.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SpaceTimePoint> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back(SpaceTimePoint::make(u(rng) * box, u(rng) * box, u(rng)));
  return p;
}

}  // namespace oracle
