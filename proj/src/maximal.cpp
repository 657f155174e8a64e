#include "captool/maximal.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "captool/error.hpp"

namespace captool {

namespace {

std::vector<double> dyadic_radii(const Grid& grid, double top) {
  const double h = grid.spacing();
  if (h > top) throw ConfigError("grid spacing exceeds the largest maximal-function radius");
  std::vector<double> r;
  for (double x = h; x <= top * (1 + 1e-12); x *= 2.0) r.push_back(x);
  r.push_back(top);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end(), [](double a, double b) { return std::fabs(a - b) <= 1e-12 * b; }), r.end());
  return r;
}

Field ball_maximal(const Field& f, std::span<const double> radii) {
  const Grid& grid = f.grid();
  const int n = grid.dim();
  const double h = grid.spacing();
  const std::int64_t N = grid.n();
  std::vector<double> af(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) af[i] = std::fabs(f[i]);
  std::vector<double> out(af);

  for (double r : radii) {
    const auto R = static_cast<std::int64_t>(std::floor(r / h + 1e-9));
    const double r2 = (r / h) * (r / h) * (1 + 1e-12);
    std::vector<std::array<std::int64_t, 3>> offs;
    for (std::int64_t a = -R; a <= R; ++a)
      for (std::int64_t b = (n > 1 ? -R : 0); b <= (n > 1 ? R : 0); ++b)
        for (std::int64_t c = (n > 2 ? -R : 0); c <= (n > 2 ? R : 0); ++c)
          if (static_cast<double>(a * a + b * b + c * c) <= r2) offs.push_back({a, b, c});
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto x = grid.unflatten(i);
      long double sum = 0.0L;
      std::size_t cnt = 0;
      for (const auto& o : offs) {
        std::array<std::int64_t, 3> y{x[0] + o[0], x[1] + o[1], x[2] + o[2]};
        bool inside = true;
        for (int d = 0; d < n; ++d) inside = inside && y[d] >= 0 && y[d] < N;
        if (!inside) continue;
        sum += af[grid.flatten(y)];
        ++cnt;
      }
      out[i] = std::max(out[i], static_cast<double>(sum / static_cast<long double>(cnt)));
    }
  }
  return Field(grid, std::move(out), true);
}

}  // namespace

RadiusSet RadiusSet::automatic(const Grid& grid) {
  RadiusSet rs;
  rs.radii_ = dyadic_radii(grid, 1.0);
  return rs;
}

RadiusSet::RadiusSet(const Grid& grid, const std::vector<double>& extra) : radii_(dyadic_radii(grid, 1.0)) {
  for (double r : extra) {
    if (!(r >= grid.spacing() * (1 - 1e-12) && r <= 1.0)) throw ConfigError("maximal radii must lie in [h, 1]");
    radii_.push_back(r);
  }
  std::sort(radii_.begin(), radii_.end());
  radii_.erase(std::unique(radii_.begin(), radii_.end()), radii_.end());
}

Field local_maximal(const Field& f, const RadiusSet& radii) { return ball_maximal(f, radii.radii()); }

Field global_maximal(const Field& f, const KernelSpec& spec) {
  if (spec.kind != KernelKind::Riesz)
    throw ConfigError("the global maximal operator is available in Riesz mode only");
  const Grid& grid = f.grid();
  const double diameter = 2.0 * grid.half_extent() * std::sqrt(static_cast<double>(grid.dim()));
  return ball_maximal(f, dyadic_radii(grid, diameter));
}

double potential_maximal_domination(const Field& h, double q, const KernelSpec& spec) {
  if (!h.nonneg() || h.max() <= 0.0) throw ConfigError("domination check needs h >= 0, not identically 0");
  if (!(q > 0.0)) throw ConfigError("domination check needs q > 0");
  auto table = shared_table(spec, h.grid());
  auto g = pow(convolve(*table, h), 1.0 / q);
  auto M = local_maximal(g, RadiusSet::automatic(h.grid()));
  double sup = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] <= 0.0) throw SingularityError("potential vanishes at a grid point");
    sup = std::max(sup, M[i] / g[i]);
  }
  return sup;
}

}  // namespace captool
