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

#include "gpfuse/core_types.hpp"

namespace gpfuse {

/*! Column value a sounding would report for a true profile:
 *  h^T x_a + h^T A (profile - x_a).
 */
inline double convolve_profile(const SoundingGeometry& g, std::span<const double> profile) {
  const std::size_t n = g.n_levels();
  if (profile.size() != n)
    throw InputError("convolve_profile: profile has " + std::to_string(profile.size()) + " levels, geometry has " +
                     std::to_string(n));
  const auto& h = g.pwf();
  const auto& xa = g.prior();
  const auto& a = g.averaging_kernel();
  double prior_part = 0.0;
  double departure = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    prior_part += h[r] * xa[r];
    double row = 0.0;
    for (std::size_t c = 0; c < n; ++c)
      row += a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * (profile[c] - xa[c]);
    departure += h[r] * row;
  }
  const double out = prior_part + departure;
  if (!std::isfinite(out)) throw NumericalError("convolve_profile produced a non-finite column");
  return out;
}

}  // namespace gpfuse
