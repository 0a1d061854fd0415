/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <array>

namespace fixtures {

/// One row of the published land/ocean error tables (ppm).
struct PublishedRow {
  const char* product;
  const char* surface;
  double daily_obs;
  double overall_bias;
  double s_b;
  double s_d;
  double s_m;
  double s_v;
  double s_s;
  double s_r;
};

// The prior rows of both tables are printed with their columns shifted by one and do not close
// under the systematic-error algebra, so they are left out here.
inline constexpr std::array<PublishedRow, 12> kPublishedRows{{
    {"MEaSUREs OCO-2 and GOSAT", "land", 2377, -0.19, 0.40, 1.03, 0.37, 0.4, 0.96, 0.58},
    {"MEaSUREs OCO-2", "land", 3413, -0.20, 0.42, 1.03, 0.39, 0.4, 0.96, 0.58},
    {"MEaSUREs OCO2-fused-2020", "land", 2246, -0.18, 0.36, 1.04, 0.36, 0.4, 0.96, 0.54},
    {"OCO-2 LtXCO2", "land", 4717, -0.12, 0.53, 1.01, 0.39, 0.4, 0.99, 0.98},
    {"OCO-2 10-sec", "land", 4271, -0.29, 0.49, 0.99, 0.29, 0.4, 0.98, 0.52},
    {"OCO-2 10-sec (all)", "land", 4778, -0.31, 0.44, 1.16, 0.29, 0.4, 1.13, 0.73},
    {"MEaSUREs OCO-2 and GOSAT", "ocean", 718, -0.10, 0.34, 0.78, 0.33, 0.4, 0.67, 0.41},
    {"MEaSUREs OCO-2", "ocean", 1031, -0.12, 0.35, 0.77, 0.32, 0.4, 0.67, 0.38},
    {"MEaSUREs OCO2-fused-2020", "ocean", 686, -0.10, 0.34, 0.78, 0.34, 0.4, 0.66, 0.37},
    {"OCO-2 LtXCO2", "ocean", 1435, -0.16, 0.35, 0.76, 0.37, 0.4, 0.62, 0.51},
    {"OCO-2 10-sec", "ocean", 1235, -0.19, 0.34, 0.77, 0.28, 0.4, 0.68, 0.33},
    {"OCO-2 10-sec (all)", "ocean", 1391, -0.19, 0.37, 0.80, 0.28, 0.4, 0.73, 0.40},
}};

}  // namespace fixtures
