#pragma once

// Centred local Hardy-Littlewood maximal operator on grids.

#include <span>
#include <vector>

#include "captool/grid.hpp"
#include "captool/kernels.hpp"

namespace captool {

class RadiusSet {
 public:
  /// h, 2h, 4h, ... up to 1, and 1 itself. Throws ConfigError if h > 1.
  static RadiusSet automatic(const Grid& grid);
  /// The automatic radii plus `extra`, each in [h, 1].
  RadiusSet(const Grid& grid, const std::vector<double>& extra);

  std::span<const double> radii() const noexcept { return radii_; }

 private:
  RadiusSet() = default;
  std::vector<double> radii_;
};

/// max over r of the mean of |f| over the cells whose centres lie within r of
/// x, and |f(x)| itself. Balls are clipped to the grid and normalised by the
/// clipped cell count.
Field local_maximal(const Field& f, const RadiusSet& radii);

/// Radii up to the grid diameter. Riesz mode only; throws ConfigError for
/// Bessel kernels.
Field global_maximal(const Field& f, const KernelSpec& spec);

/// sup over the grid of M^loc[(G*h)^{1/q}] / (G*h)^{1/q}.
double potential_maximal_domination(const Field& h, double q, const KernelSpec& spec);

}  // namespace captool
