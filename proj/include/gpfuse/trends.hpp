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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpfuse/core_types.hpp"
#include "gpfuse/raster.hpp"
#include "gpfuse/rng.hpp"
#include "gpfuse/validation.hpp"

namespace gpfuse {

struct QuarterStat {
  int region = 0;
  std::size_t quarter = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct TrendRow {
  int region = 0;
  std::size_t n_quarters = 0;
  double intercept = 0.0;
  double intercept_se = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  /// Two quarters fit exactly; the standard errors are reported as zero.
  bool se_undefined = false;
};

struct TrendResult {
  std::vector<QuarterStat> quarters;
  std::vector<TrendRow> rows;
  std::vector<std::string> warnings;
};

struct LineFit {
  double intercept = 0.0, slope = 0.0, intercept_se = 0.0, slope_se = 0.0;
  bool se_undefined = false;
};

/// Unweighted least-squares line with classical standard errors.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t k = x.size();
  if (k < 2 || y.size() != k) throw InputError("fit_line needs at least two matched points");
  const double xbar = detail::compensated_mean(x);
  const double ybar = detail::compensated_mean(y);
  detail::CompensatedSum sxx, sxy;
  for (std::size_t i = 0; i < k; ++i) {
    sxx.add((x[i] - xbar) * (x[i] - xbar));
    sxy.add((x[i] - xbar) * (y[i] - ybar));
  }
  if (!(sxx.value() > 0.0)) throw InputError("fit_line: abscissae are all equal");
  LineFit f;
  f.slope = sxy.value() / sxx.value();
  f.intercept = ybar - f.slope * xbar;
  if (k == 2) {
    f.se_undefined = true;
    return f;
  }
  detail::CompensatedSum sse;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse.add(r * r);
  }
  const double s2 = sse.value() / static_cast<double>(k - 2);
  f.slope_se = std::sqrt(s2 / sxx.value());
  f.intercept_se = std::sqrt(s2 * (1.0 / static_cast<double>(k) + xbar * xbar / sxx.value()));
  return f;
}

/*! Mean of B bootstrap resamples of `values` and their standard deviation.
 *  Draws come from `rng` in a fixed order.
 */
inline std::pair<double, double> bootstrap_mean(std::span<const double> values, std::size_t b, Rng& rng) {
  const std::size_t n = values.size();
  std::vector<double> means(b);
  for (std::size_t r = 0; r < b; ++r) {
    detail::CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(values[rng.below(n)]);
    means[r] = s.value() / static_cast<double>(n);
  }
  const double mu = detail::compensated_mean(means);
  double sd = 0.0;
  if (b > 1) {
    detail::CompensatedSum ss;
    for (double m : means) ss.add((m - mu) * (m - mu));
    sd = std::sqrt(ss.value() / static_cast<double>(b - 1));
  }
  return {mu, sd};
}

/*! Regional quarterly trends.
 *
 * Observations are assigned to a region by the raster value at their
 * location (negative values and points off the raster are ignored) and to
 * quarter q when boundaries[q] <= t < boundaries[q + 1]. Each populated
 * region-quarter gets a bootstrap mean and sd; a line is then fitted to the
 * bootstrap means against the 0-based quarter index. Regions are processed
 * in ascending order, quarters ascending, from a single generator.
 */
inline TrendResult regional_trends(std::span<const Observation> obs, const Raster& regions,
                                   std::span<const double> boundaries, std::size_t b, std::uint64_t seed) {
  if (b < 1) throw InputError("bootstrap count must be >= 1");
  if (boundaries.size() < 2) throw InputError("need at least two quarter boundaries");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1])) throw InputError("quarter boundaries must be strictly increasing");

  std::map<int, std::map<std::size_t, std::vector<double>>> groups;
  for (const auto& o : obs) {
    const auto r = regions.value_at(o.point().lat(), o.point().lon());
    if (!r || *r < 0) continue;
    const double t = o.point().time();
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), t);
    if (it == boundaries.begin() || it == boundaries.end()) continue;
    const auto q = static_cast<std::size_t>(it - boundaries.begin() - 1);
    groups[*r][q].push_back(o.value());
  }

  TrendResult out;
  Rng rng(seed);
  for (const auto& [region, quarters] : groups) {
    std::vector<double> x, y;
    for (const auto& [q, values] : quarters) {
      const auto [mu, sd] = bootstrap_mean(values, b, rng);
      out.quarters.push_back({region, q, values.size(), mu, sd});
      x.push_back(static_cast<double>(q));
      y.push_back(mu);
    }
    if (x.size() < 2) {
      out.warnings.push_back("region " + std::to_string(region) + " has fewer than two populated quarters; omitted");
      continue;
    }
    const LineFit f = fit_line(x, y);
    out.rows.push_back({region, x.size(), f.intercept, f.intercept_se, f.slope, f.slope_se, f.se_undefined});
  }
  return out;
}

}  // namespace gpfuse
