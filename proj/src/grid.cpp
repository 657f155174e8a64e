#include "captool/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "captool/error.hpp"

namespace captool {

Grid::Grid(int dim, std::int64_t points_per_axis, double half_extent)
    : dim_(dim), n_(points_per_axis), half_extent_(half_extent) {
  if (dim < 1 || dim > 3) throw ConfigError("grid dim must be 1, 2 or 3, got " + std::to_string(dim));
  if (points_per_axis < 2 || !std::has_single_bit(static_cast<std::uint64_t>(points_per_axis)))
    throw ConfigError("points per axis must be a power of two >= 2, got " +
                      std::to_string(points_per_axis));
  if (!(half_extent > 0.0) || !std::isfinite(half_extent))
    throw ConfigError("grid half extent must be positive");
  size_ = 1;
  for (int d = 0; d < dim; ++d) size_ *= static_cast<std::size_t>(n_);
}

double Grid::cell_volume() const noexcept {
  const double h = spacing();
  double v = 1.0;
  for (int d = 0; d < dim_; ++d) v *= h;
  return v;
}

std::array<std::int64_t, 3> Grid::unflatten(std::size_t flat) const noexcept {
  std::array<std::int64_t, 3> idx{0, 0, 0};
  for (int d = dim_ - 1; d >= 0; --d) {
    idx[d] = static_cast<std::int64_t>(flat % static_cast<std::size_t>(n_));
    flat /= static_cast<std::size_t>(n_);
  }
  return idx;
}

std::size_t Grid::flatten(const std::array<std::int64_t, 3>& idx) const noexcept {
  std::size_t flat = 0;
  for (int d = 0; d < dim_; ++d) flat = flat * static_cast<std::size_t>(n_) + static_cast<std::size_t>(idx[d]);
  return flat;
}

Point Grid::point(std::size_t flat) const noexcept {
  const auto idx = unflatten(flat);
  Point p{0.0, 0.0, 0.0};
  for (int d = 0; d < dim_; ++d) p[d] = coord(idx[d]);
  return p;
}

std::int64_t Grid::cell_of(const Point& x) const noexcept {
  std::array<std::int64_t, 3> idx{0, 0, 0};
  const double h = spacing();
  for (int d = 0; d < dim_; ++d) {
    if (x[d] < -half_extent_ || x[d] > half_extent_) return -1;
    auto i = static_cast<std::int64_t>(std::floor((x[d] + half_extent_) / h));
    idx[d] = std::clamp<std::int64_t>(i, 0, n_ - 1);
  }
  return static_cast<std::int64_t>(flatten(idx));
}

// ---------------------------------------------------------------- Field

Field::Field(const Grid& grid, bool nonneg) : grid_(grid), values_(grid.size(), 0.0), nonneg_(nonneg) {}

Field::Field(const Grid& grid, std::vector<double> values, bool nonneg)
    : grid_(grid), values_(std::move(values)), nonneg_(nonneg) {
  if (values_.size() != grid_.size())
    throw GridMismatch("field has " + std::to_string(values_.size()) + " values, grid has " +
                       std::to_string(grid_.size()) + " points");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw Error("field value at " + std::to_string(i) + " is not finite");
    if (nonneg_ && values_[i] < 0.0)
      throw Error("nonnegative field has negative value at " + std::to_string(i));
  }
}

double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }
double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }

// ---------------------------------------------------------------- GridSet

namespace {
std::uint64_t fnv1a(const Grid& g, std::span<const std::uint8_t> mask) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(g.dim()));
  mix(static_cast<std::uint64_t>(g.n()));
  mix(std::bit_cast<std::uint64_t>(g.half_extent()));
  for (auto m : mask) {
    h ^= m;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace

GridSet::GridSet(const Grid& grid) : grid_(grid), mask_(grid.size(), 0) { hash_ = fnv1a(grid_, mask_); }

GridSet::GridSet(const Grid& grid, std::vector<std::uint8_t> mask) : grid_(grid), mask_(std::move(mask)) {
  if (mask_.size() != grid_.size()) throw GridMismatch("mask size does not match grid");
  for (auto& m : mask_) {
    m = m ? 1 : 0;
    count_ += m;
  }
  hash_ = fnv1a(grid_, mask_);
}

std::vector<std::size_t> GridSet::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) out.push_back(i);
  return out;
}

GridSet GridSet::intersect(const GridSet& other) const {
  if (!(grid_ == other.grid_)) throw GridMismatch("set intersection on different grids");
  std::vector<std::uint8_t> m(mask_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask_[i] & other.mask_[i];
  return GridSet(grid_, std::move(m));
}

GridSet GridSet::unite(const GridSet& other) const {
  if (!(grid_ == other.grid_)) throw GridMismatch("set union on different grids");
  std::vector<std::uint8_t> m(mask_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask_[i] | other.mask_[i];
  return GridSet(grid_, std::move(m));
}

bool GridSet::subset_of(const GridSet& other) const {
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i] && !other.mask_[i]) return false;
  return true;
}

Field GridSet::indicator() const {
  std::vector<double> v(mask_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask_[i] ? 1.0 : 0.0;
  return Field(grid_, std::move(v), true);
}

// ---------------------------------------------------------------- AtomicMeasure

double distance(const Point& a, const Point& b, int dim) noexcept {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

double norm(const Point& a, int dim) noexcept { return distance(a, Point{0, 0, 0}, dim); }

AtomicMeasure::AtomicMeasure(int dim, std::vector<Atom> atoms) : dim_(dim), atoms_(std::move(atoms)) {
  for (const auto& a : atoms_) {
    if (!(a.mass >= 0.0) || !std::isfinite(a.mass)) throw Error("atom masses must be finite and nonnegative");
  }
  for (std::size_t i = 0; i < atoms_.size(); ++i)
    for (std::size_t j = i + 1; j < atoms_.size(); ++j)
      diameter_ = std::max(diameter_, distance(atoms_[i].location, atoms_[j].location, dim_));
}

AtomicMeasure AtomicMeasure::from_cell_masses(const Field& masses) {
  std::vector<Atom> atoms;
  const auto& g = masses.grid();
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] > 0.0) atoms.push_back({g.point(i), masses[i]});
  }
  return AtomicMeasure(g.dim(), std::move(atoms));
}

double AtomicMeasure::total_mass() const noexcept {
  double m = 0.0;
  for (const auto& a : atoms_) m += a.mass;
  return m;
}

AtomicMeasure AtomicMeasure::scaled(double c) const {
  auto atoms = atoms_;
  for (auto& a : atoms) a.mass *= c;
  return AtomicMeasure(dim_, std::move(atoms));
}

double AtomicMeasure::mass_of(const GridSet& set) const {
  double m = 0.0;
  for (const auto& a : atoms_) {
    const auto cell = set.grid().cell_of(a.location);
    if (cell >= 0 && set.contains(static_cast<std::size_t>(cell))) m += a.mass;
  }
  return m;
}

// ---------------------------------------------------------------- operations

double integrate(const Field& f) {
  double s = 0.0;
  for (double v : f.values()) s += v;
  return s * f.grid().cell_volume();
}

GridSet superlevel_set(const Field& w, double t) {
  std::vector<std::uint8_t> m(w.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = w[i] > t ? 1 : 0;
  return GridSet(w.grid(), std::move(m));
}

GridSet closed_superlevel_set(const Field& w, double t) {
  std::vector<std::uint8_t> m(w.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = w[i] >= t ? 1 : 0;
  return GridSet(w.grid(), std::move(m));
}

namespace {

// Number of lattice points (pitch p) within distance `radius` of x, closed.
int lattice_count(const Point& x, int dim, double pitch, double radius) {
  const int reach = static_cast<int>(std::ceil(radius / pitch)) + 1;
  int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int d = 0; d < dim; ++d) {
    lo[d] = static_cast<int>(std::floor(x[d] / pitch)) - reach;
    hi[d] = static_cast<int>(std::floor(x[d] / pitch)) + reach;
  }
  int count = 0;
  for (int a = lo[0]; a <= hi[0]; ++a)
    for (int b = lo[1]; b <= hi[1]; ++b)
      for (int c = lo[2]; c <= hi[2]; ++c) {
        Point q{a * pitch, b * pitch, c * pitch};
        if (distance(x, q, dim) <= radius + 1e-12) ++count;
      }
  return count;
}

}  // namespace

BallCover unit_ball_cover(const Grid& grid) {
  const double h = grid.spacing();
  if (!(h < 0.25)) throw ConfigError("grid spacing " + std::to_string(h) + " too coarse to resolve unit balls (need h < 1/4)");
  const int dim = grid.dim();
  const double pitch = 1.0 / (2.0 * std::sqrt(static_cast<double>(dim)));
  const double L = grid.half_extent();
  const int kmax = static_cast<int>(std::ceil((L + 0.5) / pitch));

  BallCover cover;
  std::vector<int> multiplicity(grid.size(), 0);
  int ks[3] = {0, 0, 0};
  const int kl = -kmax, kh = kmax;
  const int k1 = dim > 1 ? kh : 0, k1l = dim > 1 ? kl : 0;
  const int k2 = dim > 2 ? kh : 0, k2l = dim > 2 ? kl : 0;
  for (ks[0] = kl; ks[0] <= kh; ++ks[0])
    for (ks[1] = k1l; ks[1] <= k1; ++ks[1])
      for (ks[2] = k2l; ks[2] <= k2; ++ks[2]) {
        Point c{ks[0] * pitch, ks[1] * pitch, ks[2] * pitch};
        // Index range of cells whose centre could be within 1/2 of c.
        std::array<std::int64_t, 3> lo{0, 0, 0}, hi{0, 0, 0};
        bool any = true;
        for (int d = 0; d < dim; ++d) {
          lo[d] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((c[d] - 0.5 + L) / h - 0.5)));
          hi[d] = std::min<std::int64_t>(grid.n() - 1, static_cast<std::int64_t>(std::ceil((c[d] + 0.5 + L) / h - 0.5)));
          if (lo[d] > hi[d]) any = false;
        }
        if (!any) continue;
        std::vector<std::uint8_t> mask(grid.size(), 0);
        bool nonempty = false;
        std::array<std::int64_t, 3> idx{0, 0, 0};
        for (idx[0] = lo[0]; idx[0] <= hi[0]; ++idx[0])
          for (idx[1] = lo[1]; idx[1] <= hi[1]; ++idx[1])
            for (idx[2] = lo[2]; idx[2] <= hi[2]; ++idx[2]) {
              const auto flat = grid.flatten(idx);
              if (distance(grid.point(flat), c, dim) < 0.5) {
                mask[flat] = 1;
                ++multiplicity[flat];
                nonempty = true;
              }
            }
        if (!nonempty) continue;
        cover.balls.emplace_back(grid, std::move(mask));
        cover.centers.push_back(c);
      }
  cover.multiplicity = *std::max_element(multiplicity.begin(), multiplicity.end());
  if (std::find(multiplicity.begin(), multiplicity.end(), 0) != multiplicity.end())
    throw Error("unit ball cover leaves a grid point uncovered");

  // Exhaustive scan of one lattice cell for the neighbour bound.
  const int samples = dim == 1 ? 400 : (dim == 2 ? 60 : 16);
  int best = 0;
  std::array<int, 3> s{0, 0, 0};
  const int s1 = dim > 1 ? samples : 0, s2 = dim > 2 ? samples : 0;
  for (s[0] = 0; s[0] <= samples; ++s[0])
    for (s[1] = 0; s[1] <= s1; ++s[1])
      for (s[2] = 0; s[2] <= s2; ++s[2]) {
        Point x{s[0] * pitch / samples, s[1] * pitch / samples, s[2] * pitch / samples};
        best = std::max(best, lattice_count(x, dim, pitch, 1.0));
      }
  cover.neighbour_bound = best;
  return cover;
}

// ---------------------------------------------------------------- pointwise helpers

Field make_field(const Grid& grid, std::vector<double> values) {
  const bool nonneg = std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0; });
  return Field(grid, std::move(values), nonneg);
}

Field abs(const Field& f) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (auto& x : v) x = std::fabs(x);
  return Field(f.grid(), std::move(v), true);
}

Field pow(const Field& f, double p) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (auto& x : v) x = x == 0.0 ? 0.0 : std::pow(std::fabs(x), p);
  return Field(f.grid(), std::move(v), true);
}

Field scale(const Field& f, double c) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (auto& x : v) x *= c;
  return Field(f.grid(), std::move(v), f.nonneg() && c >= 0.0);
}

Field add(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw GridMismatch("add: fields on different grids");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return Field(a.grid(), std::move(v), a.nonneg() && b.nonneg());
}

Field multiply(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw GridMismatch("multiply: fields on different grids");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return Field(a.grid(), std::move(v), a.nonneg() && b.nonneg());
}

Field max(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw GridMismatch("max: fields on different grids");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(a[i], b[i]);
  return Field(a.grid(), std::move(v), a.nonneg() || b.nonneg());
}

Field restrict_to(const Field& f, const GridSet& set) {
  if (!(f.grid() == set.grid())) throw GridMismatch("restrict_to: different grids");
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = set.contains(i) ? f[i] : 0.0;
  return Field(f.grid(), std::move(v), f.nonneg());
}

// ---------------------------------------------------------------- serialisation

namespace {
static_assert(std::endian::native == std::endian::little, "binary layout assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("truncated binary header");
  return v;
}
}  // namespace

void write_binary(std::ostream& os, const Grid& grid, std::span<const double> payload) {
  put<std::int64_t>(os, grid.dim());
  put<std::int64_t>(os, grid.n());
  put<double>(os, grid.half_extent());
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size_bytes()));
}

Grid read_binary(std::istream& is, std::vector<double>& payload) {
  const auto dim = get<std::int64_t>(is);
  const auto n = get<std::int64_t>(is);
  const auto L = get<double>(is);
  Grid g(static_cast<int>(dim), n, L);
  payload.clear();
  double v;
  while (is.read(reinterpret_cast<char*>(&v), sizeof v)) payload.push_back(v);
  return g;
}

void write_field_binary(const std::string& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_binary(os, f.grid(), f.values());
}

Field read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::vector<double> payload;
  Grid g = read_binary(is, payload);
  if (payload.size() != g.size())
    throw Error(path + ": payload has " + std::to_string(payload.size()) + " values, expected " +
                std::to_string(g.size()));
  return make_field(g, std::move(payload));
}

nlohmann::json to_json(const Grid& grid) {
  return {{"dim", grid.dim()}, {"N", grid.n()}, {"L", grid.half_extent()}};
}

Grid grid_from_json(const nlohmann::json& j) {
  return Grid(j.at("dim").get<int>(), j.at("N").get<std::int64_t>(), j.at("L").get<double>());
}

nlohmann::json to_json(const Field& f) {
  auto j = to_json(f.grid());
  j["values"] = std::vector<double>(f.values().begin(), f.values().end());
  return j;
}

Field field_from_json(const nlohmann::json& j) {
  return make_field(grid_from_json(j), j.at("values").get<std::vector<double>>());
}

}  // namespace captool
