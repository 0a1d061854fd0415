/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpfuse/core_types.hpp"
#include "gpfuse/covariance.hpp"

namespace gpfuse {

/// Ordinary-kriging coefficients and prediction at one target.
struct KrigingSolution {
  std::vector<double> weights;
  double lagrange = 0.0;
  double prediction = 0.0;
  double prediction_variance = 0.0;
  /// Set when the covariance needed diagonal loading to factor.
  bool regularized = false;
};

namespace detail {

/// Identical locations with zero noise make the data covariance singular.
inline void reject_noise_free_duplicates(std::span<const Observation> obs) {
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].noise_sd() != 0.0) continue;
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      if (obs[j].noise_sd() == 0.0 && obs[i].point() == obs[j].point())
        throw InputError("observations " + std::to_string(i) + " and " + std::to_string(j) +
                         " share an identical location with zero noise; the kriging system is singular");
    }
  }
}

/*! Cholesky of an SPD covariance with the loading rule used throughout:
 *  if any pivot drops below 1e-13 * sill, 1e-12 * sill is added to the diagonal.
 */
struct LoadedCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool regularized = false;

  LoadedCholesky(Eigen::MatrixXd cov, double sill) {
    llt.compute(cov);
    if (llt.info() != Eigen::Success || min_pivot() < 1e-13 * sill) {
      cov.diagonal().array() += 1e-12 * sill;
      llt.compute(cov);
      regularized = true;
      if (llt.info() != Eigen::Success)
        throw NumericalError("covariance matrix is not positive definite even after diagonal loading");
    }
  }

  double min_pivot() const {
    const auto& l = llt.matrixLLT();
    if (l.rows() == 0) return 1.0;
    return l.diagonal().array().square().minCoeff();
  }
};

}  // namespace detail

/*! Dense ordinary kriging against a fixed observation set.
 *
 * The (p+1)x(p+1) saddle system [C 1; 1^T 0][a; lambda] = [c0; 1] is solved
 * through a Cholesky factor of the data covariance C: with x = C^-1 c0 and
 * y = C^-1 1, lambda = (1^T x - 1) / (1^T y) and a = x - lambda y. The
 * factor is computed once and reused for every target.
 */
class OrdinaryKriging {
 public:
  OrdinaryKriging(std::span<const Observation> obs, const KernelParams& params)
      : params_(params), points_(points_of(obs)), z_(values_of(obs)) {
    if (obs.empty()) throw InputError("ordinary kriging needs at least one observation");
    detail::reject_noise_free_duplicates(obs);
    const auto noise = noise_of(obs);
    cov_ = build_cov(points_, params_, noise);
    chol_ = std::make_unique<detail::LoadedCholesky>(cov_, params_.sill());
    ones_solved_ = chol_->llt.solve(Eigen::VectorXd::Ones(cov_.rows()));
    ones_quad_ = ones_solved_.sum();
  }

  std::size_t size() const { return points_.size(); }
  bool regularized() const { return chol_->regularized; }

  KrigingSolution solve(const SpaceTimePoint& target) const {
    const auto p = static_cast<Eigen::Index>(points_.size());
    Eigen::VectorXd c0(p);
    for (Eigen::Index i = 0; i < p; ++i) c0(i) = kernel_between(points_[i], target, params_);
    const Eigen::VectorXd x = chol_->llt.solve(c0);
    const double lambda = (x.sum() - 1.0) / ones_quad_;
    const Eigen::VectorXd a = x - lambda * ones_solved_;

    KrigingSolution s;
    s.weights.assign(a.data(), a.data() + p);
    s.lagrange = lambda;
    s.prediction = a.dot(z_);
    s.prediction_variance = params_.point_variance() - 2.0 * a.dot(c0) + a.dot(cov_ * a);
    s.regularized = chol_->regularized;
    return s;
  }

  /// Generalized-least-squares estimate of the constant mean: (1^T C^-1 z) / (1^T C^-1 1).
  double gls_mean() const { return ones_solved_.dot(z_) / ones_quad_; }

  /// Weights g with g^T z equal to the GLS mean; they sum to one.
  Eigen::VectorXd gls_weights() const { return ones_solved_ / ones_quad_; }

 private:
  KernelParams params_;
  std::vector<SpaceTimePoint> points_;
  Eigen::VectorXd z_;
  Eigen::MatrixXd cov_;
  std::unique_ptr<detail::LoadedCholesky> chol_;
  Eigen::VectorXd ones_solved_;
  double ones_quad_ = 0.0;
};

inline KrigingSolution solve_kriging(std::span<const Observation> obs, const SpaceTimePoint& target,
                                     const KernelParams& params) {
  return OrdinaryKriging(obs, params).solve(target);
}

/// Gaussian conditioning of the latent field on grid points given the data, with a known constant mean.
struct DenseConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/*! Exact posterior of Y(grid) | z under the model used by the Vecchia path.
 *
 * Grid-grid covariance carries the nugget on its diagonal; data covariance
 * carries nugget plus per-observation noise. O(p^3); meant as a reference.
 */
inline DenseConditional dense_conditional(std::span<const Observation> obs, std::span<const SpaceTimePoint> grid,
                                          const KernelParams& params, double mean) {
  DenseConditional out;
  const Eigen::MatrixXd cgg = build_cov(grid, params);
  if (obs.empty()) {
    out.mean = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), mean);
    out.covariance = cgg;
    return out;
  }
  const auto pts = points_of(obs);
  const auto noise = noise_of(obs);
  const Eigen::MatrixXd coo = build_cov(pts, params, noise);
  const Eigen::MatrixXd cog = build_cross_cov(pts, grid, params);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(coo);
  if (ldlt.info() != Eigen::Success) throw NumericalError("dense conditional: data covariance factorization failed");
  const Eigen::VectorXd r = values_of(obs).array() - mean;
  const Eigen::MatrixXd k = ldlt.solve(cog);
  out.mean = (cog.transpose() * ldlt.solve(r)).array() + mean;
  out.covariance = cgg - cog.transpose() * k;
  return out;
}

/*! Linear combination of ancillary fields (pressure, prior, pwf, averaging kernel).
 *
 * Weights are renormalized to sum exactly to one before combining so that
 * the combined pressure weighting function keeps its unit sum.
 */
inline SoundingGeometry combine_ancillary(std::span<const double> weights,
                                          std::span<const SoundingGeometry> fields) {
  if (weights.size() != fields.size())
    throw InputError("combine_ancillary: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(fields.size()) + " geometries");
  if (fields.empty()) throw InputError("combine_ancillary: no geometries to combine");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-6)
    throw InputError("combine_ancillary: weights sum to " + detail::num(wsum) + ", expected 1");

  const std::size_t n = fields.front().n_levels();
  for (std::size_t k = 1; k < fields.size(); ++k)
    if (fields[k].n_levels() != n)
      throw InputError("combine_ancillary: geometry " + std::to_string(k) + " has " +
                       std::to_string(fields[k].n_levels()) + " levels, expected " + std::to_string(n));

  std::vector<double> pressure(n, 0.0), prior(n, 0.0), pwf(n, 0.0);
  Eigen::MatrixXd ak = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const double w = weights[k] / wsum;
    const auto& g = fields[k];
    for (std::size_t l = 0; l < n; ++l) {
      pressure[l] += w * g.pressure()[l];
      prior[l] += w * g.prior()[l];
      pwf[l] += w * g.pwf()[l];
    }
    ak += w * g.averaging_kernel();
  }
  // absorb the remaining rounding into the pwf so the unit-sum invariant holds tightly
  double hsum = 0.0;
  for (double h : pwf) hsum += h;
  if (std::abs(hsum - 1.0) > 1e-12)
    for (double& h : pwf) h /= hsum;
  return SoundingGeometry(std::move(pressure), std::move(prior), std::move(pwf), std::move(ak));
}

}  // namespace gpfuse
