/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpfuse/core_types.hpp"

namespace gpfuse {

/*! Integer-valued lat/lon raster (surface masks, region maps).
 *
 * Values are stored row-major with the southernmost row first, the same
 * layout as GridSpec cell indices.
 */
class Raster {
 public:
  Raster() = default;
  Raster(GridSpec extent, std::vector<int> values) : extent_(extent), values_(std::move(values)) {
    if (values_.size() != extent_.size())
      throw InputError("raster holds " + std::to_string(values_.size()) + " values for " +
                       std::to_string(extent_.size()) + " cells");
  }

  /// Constant raster over an extent.
  static Raster filled(GridSpec extent, int value) { return Raster(extent, std::vector<int>(extent.size(), value)); }

  const GridSpec& extent() const { return extent_; }
  const std::vector<int>& values() const { return values_; }

  std::optional<int> value_at(double lat, double lon) const {
    const auto c = extent_.cell_of(lat, lon);
    if (!c) return std::nullopt;
    return values_[*c];
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  GridSpec extent_;
  std::vector<int> values_;
};

/// Land/ocean mask; raster value 0 is land and 1 is ocean.
inline SurfaceClass surface_from_code(int code) {
  if (code == 0) return SurfaceClass::land;
  if (code == 1) return SurfaceClass::ocean;
  throw InputError("surface mask value " + std::to_string(code) + " is neither 0 (land) nor 1 (ocean)");
}

}  // namespace gpfuse
