#pragma once

// Bessel and Riesz kernels: pointwise values, cell-averaged tables and
// zero-padded spectral convolution on a Grid.

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "captool/grid.hpp"

namespace captool {

enum class KernelKind { Bessel, Riesz };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

struct KernelSpec {
  KernelKind kind = KernelKind::Bessel;
  double alpha = 1.0;
  int dim = 1;

  /// Riesz needs 0 < alpha < n, Bessel needs alpha > 0. Throws ConfigError.
  void validate() const;
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// gamma(n, alpha) = Gamma((n - alpha)/2) / (pi^{n/2} 2^alpha Gamma(alpha/2)).
double riesz_constant(int n, double alpha);

/// Radial profiles. r must be > 0 (Bessel also admits r = 0 when alpha > n).
double riesz_radial(int n, double alpha, double r);
double bessel_radial(int n, double alpha, double r);
double kernel_radial(const KernelSpec& spec, double r);

/// Throws SingularityError at x = 0.
double riesz_value(const KernelSpec& spec, const Point& x);
/// Subordination integral, relative error <= 1e-8. Throws SingularityError at
/// x = 0 when alpha <= n.
double bessel_value(const KernelSpec& spec, const Point& x);

/// Mean of the kernel over the axis-aligned box [lo, hi]; handles the
/// integrable singularity at the origin.
double kernel_box_average(const KernelSpec& spec, const Point& lo, const Point& hi);

class KernelTable {
 public:
  KernelTable(const KernelSpec& spec, const Grid& grid, std::vector<double> samples);

  const KernelSpec& spec() const noexcept { return spec_; }
  const Grid& grid() const noexcept { return grid_; }
  /// Offsets run over [-(N-1), N-1] per axis.
  double sample(const std::array<std::int64_t, 3>& offset) const noexcept;
  std::span<const double> samples() const noexcept { return samples_; }
  std::int64_t width() const noexcept { return 2 * grid_.n() - 1; }
  /// r2c transform of the zero-padded table on the (2N)^dim lattice.
  const std::vector<std::complex<double>>& spectrum() const noexcept { return spectrum_; }

 private:
  KernelSpec spec_;
  Grid grid_;
  std::vector<double> samples_;
  std::vector<std::complex<double>> spectrum_;
};

using KernelTablePtr = std::shared_ptr<const KernelTable>;

/// samples[o] is the cell average of the kernel over the cell at offset o for
/// the origin cell and wherever the kernel varies by more than 1% across the
/// cell; the centre value elsewhere.
KernelTablePtr build_table(const KernelSpec& spec, const Grid& grid);

/// build_table behind a process-wide cache keyed by (spec, grid).
KernelTablePtr shared_table(const KernelSpec& spec, const Grid& grid);

/// g(x) = h^n sum_y table[x - y] f(y), linear (not circular) convolution.
Field convolve(const KernelTable& table, const Field& f);

/// Unclamped convolve on raw buffers of grid.size() values.
void convolve_into(const KernelTable& table, std::span<const double> in, std::span<double> out);

/// x -> sum mass * kernel(x - location); cells within h of an atom use the
/// cell average of the kernel instead of the point value.
Field convolve_measure(const KernelTable& table, const AtomicMeasure& mu);

/// Direct O(N^{2n}) summation; reference for convolve.
Field convolve_direct(const KernelTable& table, const Field& f);

struct TwoSidedConstants {
  double near_origin = 1.0;  ///< max of G/|x|^{a-n} and its reciprocal, |x| <= min(15, 2L)
  double shift = 1.0;        ///< max of G(x)/G(x+y) and reciprocal, |x| >= 3, |y| <= 1
  std::size_t near_samples = 0;
  std::size_t shift_samples = 0;
};

/// Observed constants of the two-sided Bessel kernel estimates over the grid
/// offsets. Requires L >= 4.
TwoSidedConstants check_two_sided(const KernelSpec& spec, const Grid& grid);

nlohmann::json to_json(const KernelSpec& spec);
KernelSpec kernel_spec_from_json(const nlohmann::json& j);

}  // namespace captool
