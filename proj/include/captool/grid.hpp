#pragma once

// Uniform cell-centred grids on [-L, L]^dim together with the sampled objects
// that live on them: fields, cell sets and atomic measures.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace captool {

using Point = std::array<double, 3>;

class Grid {
 public:
  Grid() = default;
  /// Throws ConfigError unless dim in {1,2,3}, N is a power of two >= 2 and L > 0.
  Grid(int dim, std::int64_t points_per_axis, double half_extent);

  int dim() const noexcept { return dim_; }
  std::int64_t n() const noexcept { return n_; }
  double half_extent() const noexcept { return half_extent_; }
  double spacing() const noexcept { return 2.0 * half_extent_ / static_cast<double>(n_); }
  double cell_volume() const noexcept;
  std::size_t size() const noexcept { return size_; }

  /// Cell-centre coordinate along one axis: -L + (i + 1/2) h.
  double coord(std::int64_t i) const noexcept {
    return -half_extent_ + (static_cast<double>(i) + 0.5) * spacing();
  }
  /// Row-major multi-index of a flat index (axis 0 slowest). Unused axes are 0.
  std::array<std::int64_t, 3> unflatten(std::size_t flat) const noexcept;
  std::size_t flatten(const std::array<std::int64_t, 3>& idx) const noexcept;
  Point point(std::size_t flat) const noexcept;
  /// Flat index of the cell containing x, or -1 if x lies outside the cube.
  std::int64_t cell_of(const Point& x) const noexcept;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int dim_ = 1;
  std::int64_t n_ = 2;
  double half_extent_ = 1.0;
  std::size_t size_ = 2;
};

class Field {
 public:
  Field() = default;
  /// Zero field.
  explicit Field(const Grid& grid, bool nonneg = true);
  /// Validates finiteness, and sign when `nonneg` is set.
  Field(const Grid& grid, std::vector<double> values, bool nonneg);

  template <class Fn>
  static Field sample(const Grid& grid, Fn&& fn, bool nonneg) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid.point(i));
    return Field(grid, std::move(v), nonneg);
  }

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  bool nonneg() const noexcept { return nonneg_; }
  std::size_t size() const noexcept { return values_.size(); }
  double max() const;
  double min() const;

 private:
  Grid grid_;
  std::vector<double> values_;
  bool nonneg_ = true;
};

class GridSet {
 public:
  GridSet() = default;
  explicit GridSet(const Grid& grid);  // empty
  GridSet(const Grid& grid, std::vector<std::uint8_t> mask);

  template <class Pred>
  static GridSet from_predicate(const Grid& grid, Pred&& pred) {
    std::vector<std::uint8_t> m(grid.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = pred(grid.point(i)) ? 1 : 0;
    return GridSet(grid, std::move(m));
  }

  const Grid& grid() const noexcept { return grid_; }
  bool contains(std::size_t i) const noexcept { return mask_[i] != 0; }
  std::span<const std::uint8_t> mask() const noexcept { return mask_; }
  std::size_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  double measure() const noexcept { return static_cast<double>(count_) * grid_.cell_volume(); }
  std::vector<std::size_t> indices() const;
  std::uint64_t hash() const noexcept { return hash_; }

  GridSet intersect(const GridSet& other) const;
  GridSet unite(const GridSet& other) const;
  bool subset_of(const GridSet& other) const;
  Field indicator() const;

  friend bool operator==(const GridSet& a, const GridSet& b) {
    return a.grid_ == b.grid_ && a.mask_ == b.mask_;
  }

 private:
  Grid grid_;
  std::vector<std::uint8_t> mask_;
  std::size_t count_ = 0;
  std::uint64_t hash_ = 0;
};

struct Atom {
  Point location{};
  double mass = 0.0;
};

class AtomicMeasure {
 public:
  AtomicMeasure() = default;
  AtomicMeasure(int dim, std::vector<Atom> atoms);
  /// Atoms at the cell centres of `masses`, one per nonzero cell.
  static AtomicMeasure from_cell_masses(const Field& masses);

  int dim() const noexcept { return dim_; }
  std::span<const Atom> atoms() const noexcept { return atoms_; }
  double total_mass() const noexcept;
  double support_diameter() const noexcept { return diameter_; }
  AtomicMeasure scaled(double c) const;
  /// Sum of masses of atoms whose containing cell belongs to `set`.
  double mass_of(const GridSet& set) const;

 private:
  int dim_ = 1;
  std::vector<Atom> atoms_;
  double diameter_ = 0.0;
};

double distance(const Point& a, const Point& b, int dim) noexcept;
double norm(const Point& a, int dim) noexcept;

/// Midpoint quadrature: sum of values times h^dim.
double integrate(const Field& f);

/// Cells where w > t (strict).
GridSet superlevel_set(const Field& w, double t);
/// Cells where w >= t.
GridSet closed_superlevel_set(const Field& w, double t);

struct BallCover {
  std::vector<GridSet> balls;
  std::vector<Point> centers;
  int multiplicity = 0;  ///< max number of balls containing one grid point
  /// Max number of cover balls meeting a single ball of diameter 1; depends
  /// on dim only.
  int neighbour_bound = 0;
};

/// Balls of diameter 1 centred on the lattice (1/(2 sqrt(dim))) Z^dim that
/// contain at least one cell centre. Membership is |x - c| < 1/2.
/// Throws ConfigError if h >= 1/4.
BallCover unit_ball_cover(const Grid& grid);

// Pointwise helpers used throughout.
Field make_field(const Grid& grid, std::vector<double> values);
Field abs(const Field& f);
Field pow(const Field& f, double p);  ///< |f|^p, with 0^p = 0
Field scale(const Field& f, double c);
Field add(const Field& a, const Field& b);
Field multiply(const Field& a, const Field& b);
Field max(const Field& a, const Field& b);
Field restrict_to(const Field& f, const GridSet& set);

// Serialisation. Binary layout: dim, N (int64 LE), L (float64 LE), then
// row-major float64 payload.
void write_binary(std::ostream& os, const Grid& grid, std::span<const double> payload);
void write_field_binary(const std::string& path, const Field& f);
Field read_field_binary(const std::string& path);
/// Reads header and raw payload; payload length is whatever follows.
Grid read_binary(std::istream& is, std::vector<double>& payload);

nlohmann::json to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Field& f);
Field field_from_json(const nlohmann::json& j);

}  // namespace captool
