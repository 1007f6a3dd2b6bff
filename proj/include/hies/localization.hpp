/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "hies/grid.hpp"

namespace hies {

/// Gaspari-Cohn fifth-order piecewise-rational taper with half-width c:
/// value 1 at distance 0, compactly supported on [0, 2c].
inline double gaspari_cohn(double dist, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("gaspari_cohn: half-width must be > 0");
  double z = std::abs(dist) / c;
  if (z >= 2.0) return 0.0;
  if (z <= 1.0)
    return -0.25 * z * z * z * z * z + 0.5 * z * z * z * z + 0.625 * z * z * z -
           (5.0 / 3.0) * z * z + 1.0;
  return (1.0 / 12.0) * z * z * z * z * z - 0.5 * z * z * z * z + 0.625 * z * z * z +
         (5.0 / 3.0) * z * z - 5.0 * z + 4.0 - 2.0 / (3.0 * z);
}

/// Localization of the latent-field rows of the gain: taper range is the full
/// support width, so taper(0) = 1 and taper(d) = 0 for d >= range.
struct LocalizationSpec {
  double range = 1.0;

  void validate() const {
    if (!(range > 0.0)) throw std::invalid_argument("LocalizationSpec: range must be > 0");
  }

  double taper(double dist) const { return gaspari_cohn(dist, 0.5 * range); }
};

/// Taper matrix between grid cells and observation anchors (n_cells x n_obs).
inline Eigen::MatrixXd build_taper(const GridSpec& grid, const Eigen::MatrixXd& anchors,
                                   const LocalizationSpec& loc) {
  loc.validate();
  Eigen::MatrixXd t(grid.size(), anchors.rows());
  for (int i = 0; i < grid.size(); ++i) {
    auto c = grid.cell_coords(i);
    for (int j = 0; j < anchors.rows(); ++j) {
      double dx = c[0] - anchors(j, 0);
      double dy = c[1] - anchors(j, 1);
      t(i, j) = loc.taper(std::sqrt(dx * dx + dy * dy));
    }
  }
  return t;
}

}  // namespace hies
