#include "captool/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "captool/error.hpp"
#include "fft.hpp"

namespace captool {

std::string to_string(KernelKind k) { return k == KernelKind::Bessel ? "bessel" : "riesz"; }

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "bessel") return KernelKind::Bessel;
  if (s == "riesz") return KernelKind::Riesz;
  throw ConfigError("unknown kernel kind '" + s + "' (expected bessel or riesz)");
}

void KernelSpec::validate() const {
  if (dim < 1 || dim > 3) throw ConfigError("kernel dim must be 1, 2 or 3");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("kernel order alpha must be positive");
  if (kind == KernelKind::Riesz && !(alpha < dim))
    throw ConfigError("Riesz kernel requires 0 < alpha < n");
}

double riesz_constant(int n, double alpha) {
  using std::numbers::pi;
  return std::exp(std::lgamma(0.5 * (n - alpha)) - 0.5 * n * std::log(pi) - alpha * std::log(2.0) -
                  std::lgamma(0.5 * alpha));
}

double riesz_radial(int n, double alpha, double r) {
  if (!(r > 0.0)) throw SingularityError("Riesz kernel evaluated at the origin; use cell averaging");
  return riesz_constant(n, alpha) * std::pow(r, alpha - n);
}

double bessel_radial(int n, double alpha, double r) {
  using std::numbers::pi;
  const double log_prefactor = -(0.5 * n * std::log(4.0 * pi) + std::lgamma(0.5 * alpha));
  const double a = 0.5 * (alpha - n);
  if (r == 0.0) {
    if (alpha > n) return std::exp(log_prefactor + std::lgamma(a));
    throw SingularityError("Bessel kernel of order alpha <= n evaluated at the origin; use cell averaging");
  }
  if (!(r > 0.0)) throw SingularityError("negative radius");

  // t = e^u turns the subordination integral into int exp(phi(u)) du with
  // phi(u) = a u - e^u - (r^2/4) e^{-u}, concave and doubly-exponentially
  // decaying on both sides; the trapezoidal rule converges geometrically.
  const double q = 0.25 * r * r;
  const double disc = std::sqrt(a * a + r * r);
  const double peak_t = a >= 0.0 ? 0.5 * (a + disc) : (0.5 * r * r) / (disc - a);
  const double u0 = std::log(peak_t);
  auto phi = [&](double u, double et) { return a * u - et - q / et; };
  const double phi0 = phi(u0, peak_t);
  const double curvature = peak_t + q / peak_t;
  const double step = std::min(0.1, 0.25 / std::sqrt(curvature));
  const double cutoff = 46.0;

  double sum = 1.0;
  const double grow = std::exp(step);
  const double shrink = 1.0 / grow;
  double et = peak_t;
  for (int k = 1; k < 100000; ++k) {
    et *= grow;
    const double d = phi(u0 + k * step, et) - phi0;
    if (d < -cutoff) break;
    sum += std::exp(d);
  }
  et = peak_t;
  for (int k = 1; k < 100000; ++k) {
    et *= shrink;
    const double d = phi(u0 - k * step, et) - phi0;
    if (d < -cutoff) break;
    sum += std::exp(d);
  }
  return std::exp(log_prefactor + phi0 + std::log(step * sum));
}

double kernel_radial(const KernelSpec& spec, double r) {
  return spec.kind == KernelKind::Riesz ? riesz_radial(spec.dim, spec.alpha, r)
                                        : bessel_radial(spec.dim, spec.alpha, r);
}

double riesz_value(const KernelSpec& spec, const Point& x) {
  if (spec.kind != KernelKind::Riesz) throw ConfigError("riesz_value called with a Bessel spec");
  return riesz_radial(spec.dim, spec.alpha, norm(x, spec.dim));
}

double bessel_value(const KernelSpec& spec, const Point& x) {
  if (spec.kind != KernelKind::Bessel) throw ConfigError("bessel_value called with a Riesz spec");
  return bessel_radial(spec.dim, spec.alpha, norm(x, spec.dim));
}

// ---------------------------------------------------------------- box quadrature

namespace {

struct GaussRule {
  std::vector<double> nodes, weights;
};

GaussRule make_gauss(int m) {
  GaussRule g;
  g.nodes.resize(m);
  g.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) {
        g.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        break;
      }
      g.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    g.nodes[i] = x;
  }
  return g;
}

const GaussRule& gauss(int m) {
  static const GaussRule g4 = make_gauss(4);
  static const GaussRule g8 = make_gauss(8);
  return m == 4 ? g4 : g8;
}

class BoxIntegrator {
 public:
  explicit BoxIntegrator(const KernelSpec& spec) : spec_(spec), n_(spec.dim) {}

  double integrate(Point lo, Point hi) const {
    // Split at the origin along every axis that it strictly crosses.
    for (int d = 0; d < n_; ++d) {
      if (lo[d] < 0.0 && hi[d] > 0.0) {
        Point h1 = hi, l2 = lo;
        h1[d] = 0.0;
        l2[d] = 0.0;
        return integrate(lo, h1) + integrate(l2, hi);
      }
    }
    bool touches = true;
    for (int d = 0; d < n_; ++d) touches = touches && lo[d] <= 0.0 && hi[d] >= 0.0;
    if (touches) {
      Point sides{0, 0, 0};
      for (int d = 0; d < n_; ++d) sides[d] = hi[d] - lo[d];
      return corner(sides);
    }
    return away(lo, hi);
  }

 private:
  double f(double r) const { return kernel_radial(spec_, r); }

  double gauss_box(const Point& lo, const Point& hi, int order) const {
    const auto& g = gauss(order);
    const int m = static_cast<int>(g.nodes.size());
    Point c{0, 0, 0}, w{0, 0, 0};
    double jac = 1.0;
    for (int d = 0; d < n_; ++d) {
      c[d] = 0.5 * (lo[d] + hi[d]);
      w[d] = 0.5 * (hi[d] - lo[d]);
      jac *= w[d];
    }
    double sum = 0.0;
    const int m1 = n_ > 1 ? m : 1, m2 = n_ > 2 ? m : 1;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m1; ++j)
        for (int k = 0; k < m2; ++k) {
          const double x = c[0] + w[0] * g.nodes[i];
          const double y = n_ > 1 ? c[1] + w[1] * g.nodes[j] : 0.0;
          const double z = n_ > 2 ? c[2] + w[2] * g.nodes[k] : 0.0;
          double wt = g.weights[i];
          if (n_ > 1) wt *= g.weights[j];
          if (n_ > 2) wt *= g.weights[k];
          sum += wt * f(std::sqrt(x * x + y * y + z * z));
        }
    return sum * jac;
  }

  // Origin outside the closed box.
  double away(const Point& lo, const Point& hi) const {
    double dist2 = 0.0, width = 0.0;
    for (int d = 0; d < n_; ++d) {
      const double gap = lo[d] > 0.0 ? lo[d] : (hi[d] < 0.0 ? -hi[d] : 0.0);
      dist2 += gap * gap;
      width = std::max(width, hi[d] - lo[d]);
    }
    const double dist = std::sqrt(dist2);
    if (dist >= 4.0 * width) return gauss_box(lo, hi, 4);
    if (dist >= width) return gauss_box(lo, hi, 8);
    double total = 0.0;
    const int children = 1 << n_;
    for (int c = 0; c < children; ++c) {
      Point l = lo, h = hi;
      for (int d = 0; d < n_; ++d) {
        const double mid = 0.5 * (lo[d] + hi[d]);
        if (c & (1 << d)) l[d] = mid;
        else h[d] = mid;
      }
      total += away(l, h);
    }
    return total;
  }

  // Box [0, sides] with the singularity at a corner.
  double corner(const Point& sides) const {
    double m = sides[0];
    for (int d = 1; d < n_; ++d) m = std::min(m, sides[d]);
    if (!(m > 0.0)) return 0.0;
    double total = cube(m);
    for (int i = 0; i < n_; ++i) {
      if (sides[i] <= m) continue;
      Point lo{0, 0, 0}, hi{0, 0, 0};
      for (int j = 0; j < n_; ++j) hi[j] = j < i ? m : sides[j];
      lo[i] = m;
      total += away(lo, hi);
    }
    return total;
  }

  // Integral over [0, m]^n by dyadic shells plus geometric tail.
  double cube(double m) const {
    constexpr int kLevels = 24;
    double total = 0.0, prev = 0.0, last = 0.0;
    double a = m;
    const int children = 1 << n_;
    for (int k = 0; k < kLevels; ++k) {
      double shell = 0.0;
      const double half = 0.5 * a;
      for (int c = 1; c < children; ++c) {
        Point lo{0, 0, 0}, hi{0, 0, 0};
        for (int d = 0; d < n_; ++d) {
          lo[d] = (c & (1 << d)) ? half : 0.0;
          hi[d] = lo[d] + half;
        }
        shell += gauss_box(lo, hi, 8);
      }
      total += shell;
      prev = last;
      last = shell;
      a = half;
    }
    const double ratio = prev > 0.0 ? last / prev : 0.0;
    if (ratio > 0.0 && ratio < 1.0) total += last * ratio / (1.0 - ratio);
    return total;
  }

  KernelSpec spec_;
  int n_;
};

}  // namespace

double kernel_box_average(const KernelSpec& spec, const Point& lo, const Point& hi) {
  double vol = 1.0;
  for (int d = 0; d < spec.dim; ++d) vol *= hi[d] - lo[d];
  if (!(vol > 0.0)) throw Error("kernel_box_average: degenerate box");
  return BoxIntegrator(spec).integrate(lo, hi) / vol;
}

// ---------------------------------------------------------------- tables

KernelTable::KernelTable(const KernelSpec& spec, const Grid& grid, std::vector<double> samples)
    : spec_(spec), grid_(grid), samples_(std::move(samples)) {
  const int n = grid_.dim();
  const std::int64_t w = width();
  std::size_t expected = 1;
  for (int d = 0; d < n; ++d) expected *= static_cast<std::size_t>(w);
  if (samples_.size() != expected) throw GridMismatch("kernel table size does not match grid");

  const std::size_t p = static_cast<std::size_t>(2 * grid_.n());
  std::size_t real_n = 1;
  for (int d = 0; d < n; ++d) real_n *= p;
  detail::FftBuffer in(real_n * sizeof(double));
  detail::FftBuffer out(detail::complex_size(n, p) * sizeof(std::complex<double>));
  auto* r = static_cast<double*>(in.data());
  std::fill(r, r + real_n, 0.0);
  const std::int64_t half = grid_.n() - 1;
  std::array<std::int64_t, 3> o{0, 0, 0};
  const std::int64_t lo1 = n > 1 ? -half : 0, hi1 = n > 1 ? half : 0;
  const std::int64_t lo2 = n > 2 ? -half : 0, hi2 = n > 2 ? half : 0;
  const auto P = static_cast<std::int64_t>(p);
  for (o[0] = -half; o[0] <= half; ++o[0])
    for (o[1] = lo1; o[1] <= hi1; ++o[1])
      for (o[2] = lo2; o[2] <= hi2; ++o[2]) {
        std::size_t flat = 0;
        for (int d = 0; d < n; ++d) flat = flat * p + static_cast<std::size_t>((o[d] + P) % P);
        r[flat] = sample(o);
      }
  auto* c = static_cast<std::complex<double>*>(out.data());
  detail::forward_r2c(n, p, r, c);
  spectrum_.assign(c, c + detail::complex_size(n, p));
}

double KernelTable::sample(const std::array<std::int64_t, 3>& offset) const noexcept {
  const std::int64_t half = grid_.n() - 1;
  const std::int64_t w = width();
  std::size_t flat = 0;
  for (int d = 0; d < grid_.dim(); ++d) flat = flat * static_cast<std::size_t>(w) + static_cast<std::size_t>(offset[d] + half);
  return samples_[flat];
}

namespace {

// Cell average or centre value for the cell at integer offset `o`.
double table_entry(const KernelSpec& spec, const BoxIntegrator& integ, double h, const std::array<std::int64_t, 3>& o) {
  const int n = spec.dim;
  Point lo{0, 0, 0}, hi{0, 0, 0};
  double dmin2 = 0.0, dmax2 = 0.0, c2 = 0.0;
  bool origin = true;
  for (int d = 0; d < n; ++d) {
    const double c = static_cast<double>(o[d]) * h;
    lo[d] = c - 0.5 * h;
    hi[d] = c + 0.5 * h;
    c2 += c * c;
    const double gap = lo[d] > 0.0 ? lo[d] : (hi[d] < 0.0 ? -hi[d] : 0.0);
    dmin2 += gap * gap;
    const double far = std::max(std::fabs(lo[d]), std::fabs(hi[d]));
    dmax2 += far * far;
    origin = origin && o[d] == 0;
  }
  const double vol = std::pow(h, n);
  if (origin) return integ.integrate(lo, hi) / vol;
  const double kmin = kernel_radial(spec, std::sqrt(dmin2));
  const double kmax = kernel_radial(spec, std::sqrt(dmax2));
  if (kmin > 1.01 * kmax) return integ.integrate(lo, hi) / vol;
  return kernel_radial(spec, std::sqrt(c2));
}

}  // namespace

KernelTablePtr build_table(const KernelSpec& spec, const Grid& grid) {
  spec.validate();
  if (spec.dim != grid.dim()) throw GridMismatch("kernel dim does not match grid dim");
  const int n = grid.dim();
  const std::int64_t half = grid.n() - 1;
  const std::int64_t w = 2 * grid.n() - 1;
  std::size_t total = 1;
  for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(w);
  std::vector<double> samples(total, 0.0);
  const double h = grid.spacing();
  BoxIntegrator integ(spec);

  auto put = [&](const std::array<std::int64_t, 3>& o, double v) {
    std::size_t flat = 0;
    for (int d = 0; d < n; ++d) flat = flat * static_cast<std::size_t>(w) + static_cast<std::size_t>(o[d] + half);
    samples[flat] = v;
  };
  // Enumerate a >= b >= c >= 0 and fill every signed permutation.
  const std::int64_t bmax_outer = n > 1 ? half : 0;
  for (std::int64_t a = 0; a <= half; ++a)
    for (std::int64_t b = 0; b <= std::min(a, bmax_outer); ++b)
      for (std::int64_t c = 0; c <= (n > 2 ? b : 0); ++c) {
        const std::array<std::int64_t, 3> base{a, b, c};
        const double v = table_entry(spec, integ, h, base);
        std::array<int, 3> perm{0, 1, 2};
        do {
          bool valid = true;
          for (int d = n; d < 3; ++d) valid = valid && perm[d] == d;
          if (!valid) continue;
          for (int signs = 0; signs < (1 << n); ++signs) {
            std::array<std::int64_t, 3> o{0, 0, 0};
            for (int d = 0; d < n; ++d) o[d] = (signs & (1 << d)) ? -base[perm[d]] : base[perm[d]];
            put(o, v);
          }
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
  return std::make_shared<KernelTable>(spec, grid, std::move(samples));
}

KernelTablePtr shared_table(const KernelSpec& spec, const Grid& grid) {
  using Key = std::tuple<int, double, int, std::int64_t, double>;
  static std::mutex m;
  static std::map<Key, KernelTablePtr> cache;
  const Key key{static_cast<int>(spec.kind), spec.alpha, grid.dim(), grid.n(), grid.half_extent()};
  {
    std::lock_guard lock(m);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto t = build_table(spec, grid);
  std::lock_guard lock(m);
  return cache.emplace(key, t).first->second;
}

// ---------------------------------------------------------------- convolution

void convolve_into(const KernelTable& table, std::span<const double> in, std::span<double> out) {
  const Grid& grid = table.grid();
  if (in.size() != grid.size() || out.size() != grid.size())
    throw GridMismatch("convolve_into: buffer size differs from grid size");
  const int n = grid.dim();
  const std::size_t N = static_cast<std::size_t>(grid.n());
  const std::size_t p = 2 * N;
  std::size_t real_n = 1;
  for (int d = 0; d < n; ++d) real_n *= p;
  const std::size_t cn = detail::complex_size(n, p);
  detail::FftBuffer rbuf(real_n * sizeof(double));
  detail::FftBuffer cbuf(cn * sizeof(std::complex<double>));
  auto* r = static_cast<double*>(rbuf.data());
  auto* c = static_cast<std::complex<double>*>(cbuf.data());
  std::fill(r, r + real_n, 0.0);

  // Rows of length N along the last axis are contiguous in both layouts.
  const std::size_t rows = grid.size() / N;
  auto row_offset = [&](std::size_t row) {
    std::size_t q = 0, rem = row;
    std::size_t stride = p;
    for (int d = n - 2; d >= 0; --d) {
      q += (rem % N) * stride;
      rem /= N;
      stride *= p;
    }
    return q;
  };
  for (std::size_t row = 0; row < rows; ++row)
    std::copy_n(in.data() + row * N, N, r + row_offset(row));
  detail::forward_r2c(n, p, r, c);
  const auto& spec = table.spectrum();
  for (std::size_t k = 0; k < cn; ++k) c[k] *= spec[k];
  detail::inverse_c2r(n, p, c, r);
  const double norm_factor = grid.cell_volume() / static_cast<double>(real_n);
  for (std::size_t row = 0; row < rows; ++row) {
    const double* src = r + row_offset(row);
    double* dst = out.data() + row * N;
    for (std::size_t k = 0; k < N; ++k) dst[k] = src[k] * norm_factor;
  }
}

Field convolve(const KernelTable& table, const Field& f) {
  if (!(f.grid() == table.grid())) throw GridMismatch("convolve: field grid differs from table grid");
  std::vector<double> v(f.size());
  convolve_into(table, f.values(), v);
  if (f.nonneg()) {
    // Round-off in the spectral product can leave values of order 1e-17
    // below zero where the exact convolution is nonnegative.
    for (auto& x : v) x = std::max(x, 0.0);
  }
  return Field(table.grid(), std::move(v), f.nonneg());
}

Field convolve_direct(const KernelTable& table, const Field& f) {
  const Grid& grid = table.grid();
  if (!(f.grid() == grid)) throw GridMismatch("convolve_direct: field grid differs from table grid");
  const int n = grid.dim();
  std::vector<double> v(f.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto xi = grid.unflatten(i);
    double s = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (f[j] == 0.0) continue;
      const auto yj = grid.unflatten(j);
      std::array<std::int64_t, 3> o{0, 0, 0};
      for (int d = 0; d < n; ++d) o[d] = xi[d] - yj[d];
      s += table.sample(o) * f[j];
    }
    v[i] = s * grid.cell_volume();
  }
  return Field(grid, std::move(v), f.nonneg());
}

Field convolve_measure(const KernelTable& table, const AtomicMeasure& mu) {
  const Grid& grid = table.grid();
  const auto& spec = table.spec();
  const int n = grid.dim();
  if (mu.dim() != n) throw GridMismatch("measure dim does not match grid");
  const double L = grid.half_extent();
  for (const auto& a : mu.atoms())
    for (int d = 0; d < n; ++d)
      if (a.location[d] < -L || a.location[d] > L) throw Error("atom outside the grid cube");
  const double h = grid.spacing();
  std::vector<double> v(grid.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point x = grid.point(i);
    double s = 0.0;
    for (const auto& a : mu.atoms()) {
      if (a.mass == 0.0) continue;
      const double r = distance(x, a.location, n);
      double k;
      if (r < h) {
        Point lo{0, 0, 0}, hi{0, 0, 0};
        for (int d = 0; d < n; ++d) {
          lo[d] = x[d] - 0.5 * h - a.location[d];
          hi[d] = x[d] + 0.5 * h - a.location[d];
        }
        k = kernel_box_average(spec, lo, hi);
      } else {
        k = kernel_radial(spec, r);
      }
      s += a.mass * k;
    }
    v[i] = s;
  }
  return Field(grid, std::move(v), true);
}

// ---------------------------------------------------------------- two-sided estimates

TwoSidedConstants check_two_sided(const KernelSpec& spec, const Grid& grid) {
  if (spec.kind != KernelKind::Bessel) throw ConfigError("check_two_sided needs a Bessel kernel");
  spec.validate();
  if (grid.half_extent() < 4.0) throw ConfigError("check_two_sided needs grid half extent L >= 4");
  const int n = grid.dim();
  const double h = grid.spacing();
  const std::int64_t half = grid.n() - 1;
  const double rmax = std::min(15.0, 2.0 * grid.half_extent());
  TwoSidedConstants out;

  const std::int64_t bmax = n > 1 ? half : 0;
  for (std::int64_t a = 0; a <= half; ++a)
    for (std::int64_t b = 0; b <= std::min(a, bmax); ++b)
      for (std::int64_t c = 0; c <= (n > 2 ? b : 0); ++c) {
        if (a == 0) continue;
        const double r = h * std::sqrt(static_cast<double>(a * a + b * b + c * c));
        if (r > rmax) continue;
        const double ratio = bessel_radial(n, spec.alpha, r) / std::pow(r, spec.alpha - n);
        out.near_origin = std::max({out.near_origin, ratio, 1.0 / ratio});
        ++out.near_samples;
      }

  // Pairs along an axis and, for dim >= 2, with y perpendicular to x.
  const auto steps = static_cast<std::int64_t>(std::floor(1.0 / h + 1e-12));
  for (std::int64_t k = 1; k <= half; ++k) {
    const double x = k * h;
    if (x < 3.0) continue;
    const double gx = bessel_radial(n, spec.alpha, x);
    for (std::int64_t j = -steps; j <= steps; ++j) {
      const double y = j * h;
      double rs[2] = {std::fabs(x + y), std::sqrt(x * x + y * y)};
      const int variants = n > 1 ? 2 : 1;
      for (int v = 0; v < variants; ++v) {
        if (rs[v] > half * h * std::sqrt(static_cast<double>(n))) continue;
        const double g = bessel_radial(n, spec.alpha, rs[v]);
        out.shift = std::max({out.shift, gx / g, g / gx});
        ++out.shift_samples;
      }
    }
  }
  return out;
}

nlohmann::json to_json(const KernelSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"alpha", spec.alpha}, {"dim", spec.dim}};
}

KernelSpec kernel_spec_from_json(const nlohmann::json& j) {
  KernelSpec s;
  s.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  s.alpha = j.at("alpha").get<double>();
  s.dim = j.at("dim").get<int>();
  return s;
}

}  // namespace captool
