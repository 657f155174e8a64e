#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "captool/error.hpp"
#include "captool/kernels.hpp"

using namespace captool;
using std::numbers::pi;

namespace {

KernelSpec bessel(double alpha, int dim) { return {KernelKind::Bessel, alpha, dim}; }
KernelSpec riesz(double alpha, int dim) { return {KernelKind::Riesz, alpha, dim}; }

// Closed form through the modified Bessel function of the second kind; an
// independent route to the subordination integral.
double bessel_kernel_via_k(int n, double alpha, double r) {
  const double nu = 0.5 * (n - alpha);
  const double c = std::pow(2.0, 0.5 * (n + alpha - 2.0)) * std::pow(pi, 0.5 * n) * std::tgamma(0.5 * alpha);
  return std::cyl_bessel_k(std::fabs(nu), r) * std::pow(r, -nu) / c;
}

Field random_field(const Grid& g, std::mt19937_64& rng, bool nonneg) {
  std::uniform_real_distribution<double> u(nonneg ? 0.0 : -1.0, 1.0);
  std::vector<double> v(g.size());
  for (auto& x : v) x = u(rng);
  return Field(g, v, nonneg);
}

double max_rel_diff(const Field& a, const Field& b) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::fabs(b[i]));
    diff = std::max(diff, std::fabs(a[i] - b[i]));
  }
  return diff / scale;
}

}  // namespace

TEST(RieszValue, Examples) {
  EXPECT_NEAR(riesz_value(riesz(2.0, 3), {1.0, 0.0, 0.0}), 1.0 / (4.0 * pi), 1e-15);
  EXPECT_NEAR(riesz_value(riesz(2.0, 3), {0.0, 1.0, 0.0}), 0.0795775, 1e-7);
  EXPECT_DOUBLE_EQ(riesz_value(riesz(0.5, 1), {0.7, 0, 0}), riesz_value(riesz(0.5, 1), {-0.7, 0, 0}));
  EXPECT_NEAR(riesz_value(riesz(1.0, 2), {2.0, 0, 0}) / riesz_value(riesz(1.0, 2), {1.0, 0, 0}), 0.5, 1e-15);
  EXPECT_THROW(riesz_value(riesz(1.0, 2), {0, 0, 0}), SingularityError);
  EXPECT_THROW(riesz_value(bessel(1.0, 2), {1, 0, 0}), ConfigError);
}

TEST(KernelSpec, Validation) {
  EXPECT_THROW(riesz(1.0, 1).validate(), ConfigError);
  EXPECT_THROW(bessel(-1.0, 1).validate(), ConfigError);
  EXPECT_NO_THROW(bessel(3.0, 1).validate());
}

TEST(BesselValue, ClosedFormsDim1And3) {
  for (double r : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(bessel_value(bessel(2.0, 1), {r, 0, 0}) / (std::exp(-r) / 2.0), 1.0, 1e-10);
    EXPECT_NEAR(bessel_value(bessel(2.0, 3), {0, r, 0}) / (std::exp(-r) / (4.0 * pi * r)), 1.0, 1e-10);
  }
  EXPECT_NEAR(bessel_value(bessel(2.0, 1), {1.0, 0, 0}), 0.1839397, 1e-7);
  EXPECT_DOUBLE_EQ(bessel_value(bessel(0.7, 2), {0.3, 0.4, 0}), bessel_value(bessel(0.7, 2), {-0.3, -0.4, 0}));
}

TEST(BesselValue, MatchesModifiedBesselOracle) {
  for (int n = 1; n <= 3; ++n)
    for (double alpha : {0.25, 0.5, 1.0, 1.5, 2.5, 4.0})
      for (double r : {1e-4, 0.01, 0.3, 1.0, 3.0, 10.0, 25.0}) {
        if (std::fabs(alpha - n) < 1e-12) continue;
        const double got = bessel_radial(n, alpha, r);
        const double want = bessel_kernel_via_k(n, alpha, r);
        EXPECT_NEAR(got / want, 1.0, 1e-8) << "n=" << n << " alpha=" << alpha << " r=" << r;
      }
}

TEST(BesselValue, OriginBehaviour) {
  EXPECT_THROW(bessel_value(bessel(1.0, 2), {0, 0, 0}), SingularityError);
  EXPECT_THROW(bessel_value(bessel(1.0, 1), {0, 0, 0}), SingularityError);
  // alpha > n: finite at 0, G_2(0) = 1/2 in dim 1.
  EXPECT_NEAR(bessel_value(bessel(2.0, 1), {0, 0, 0}), 0.5, 1e-14);
}

TEST(BesselValue, ComparableToRieszProfileNearOrigin) {
  const auto spec = bessel(1.0, 2);
  const auto c = check_two_sided(spec, Grid(2, 64, 4.0));
  const double ratio = bessel_value(spec, {0.01, 0, 0}) / std::pow(0.01, -1.0);
  EXPECT_GE(ratio, 1.0 / c.near_origin);
  EXPECT_LE(ratio, c.near_origin);
}

TEST(BuildTable, OriginCellAndMonotonicity) {
  const Grid g(1, 64, 4.0);
  auto t = build_table(bessel(0.5, 1), g);
  EXPECT_TRUE(std::isfinite(t->sample({0, 0, 0})));
  EXPECT_GT(t->sample({0, 0, 0}), t->sample({1, 0, 0}));
  EXPECT_LT(t->sample({4, 0, 0}), t->sample({3, 0, 0}));
  for (std::int64_t k = 0; k + 1 < g.n(); ++k) {
    EXPECT_GE(t->sample({k, 0, 0}), t->sample({k + 1, 0, 0}));
    EXPECT_DOUBLE_EQ(t->sample({k, 0, 0}), t->sample({-k, 0, 0}));
  }
}

TEST(BuildTable, RieszOriginCellClosedForm) {
  const Grid g(1, 128, 2.0);
  const double h = g.spacing();
  auto t = build_table(riesz(0.5, 1), g);
  const double want = riesz_constant(1, 0.5) * (1.0 / h) * 2.0 * std::sqrt(h / 2.0) / 0.5;
  EXPECT_NEAR(t->sample({0, 0, 0}) / want, 1.0, 1e-6);
}

TEST(BuildTable, CellAverageMatchesBruteForce) {
  // Midpoint rule on an 800^2 subgrid of the cell next to the origin.
  const Grid g(2, 32, 2.0);
  const auto spec = bessel(1.0, 2);
  auto t = build_table(spec, g);
  const double h = g.spacing();
  const int m = 800;
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double x = 0.5 * h + (i + 0.5) * h / m, y = -0.5 * h + (j + 0.5) * h / m;
      s += bessel_radial(2, 1.0, std::hypot(x, y));
    }
  EXPECT_NEAR(t->sample({1, 0, 0}) / (s / (double(m) * m)), 1.0, 1e-5);
}

TEST(BuildTable, SymmetricAndRayMonotone2D) {
  const Grid g(2, 32, 4.0);
  auto t = build_table(bessel(1.0, 2), g);
  for (std::int64_t a = 0; a < 31; ++a)
    for (std::int64_t b = 0; b < 31; ++b) {
      const double v = t->sample({a, b, 0});
      EXPECT_GT(v, 0.0);
      EXPECT_EQ(v, t->sample({b, a, 0}));
      EXPECT_EQ(v, t->sample({-a, b, 0}));
      EXPECT_EQ(v, t->sample({a, -b, 0}));
    }
  for (std::int64_t k = 0; k + 1 < 31; ++k) {
    EXPECT_GE(t->sample({k, 0, 0}), t->sample({k + 1, 0, 0}));
    EXPECT_GE(t->sample({k, k, 0}), t->sample({k + 1, k + 1, 0}));
  }
}

TEST(BuildTable, RieszHomogeneityUnderGridScaling) {
  for (int dim = 1; dim <= 2; ++dim) {
    const double alpha = 0.5;
    auto t1 = build_table(riesz(alpha, dim), Grid(dim, 16, 1.0));
    auto t2 = build_table(riesz(alpha, dim), Grid(dim, 16, 2.0));
    const double factor = std::pow(2.0, alpha - dim);
    for (std::size_t i = 0; i < t1->samples().size(); ++i)
      EXPECT_NEAR(t2->samples()[i] / (factor * t1->samples()[i]), 1.0, 1e-9);
  }
}

TEST(Convolve, ZeroDeltaAndLinearity) {
  const Grid g(2, 16, 2.0);
  auto t = build_table(bessel(1.0, 2), g);
  EXPECT_EQ(convolve(*t, Field(g)).max(), 0.0);

  std::vector<double> d(g.size(), 0.0);
  const auto at = g.flatten({5, 9, 0});
  d[at] = 1.0 / g.cell_volume();
  auto out = convolve(*t, Field(g, d, true));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto xi = g.unflatten(i);
    const double want = t->sample({xi[0] - 5, xi[1] - 9, 0});
    EXPECT_NEAR(out[i], want, 1e-10 * t->sample({0, 0, 0}));
  }

  std::mt19937_64 rng(5);
  auto f1 = random_field(g, rng, false), f2 = random_field(g, rng, false);
  auto lhs = convolve(*t, add(f1, f2));
  auto rhs = add(convolve(*t, f1), convolve(*t, f2));
  EXPECT_LT(max_rel_diff(lhs, rhs), 1e-10);
}

TEST(Convolve, SpectralMatchesDirectSummation) {
  std::mt19937_64 rng(21);
  for (int dim = 1; dim <= 3; ++dim) {
    const Grid g(dim, dim == 3 ? 8 : 32, 2.0);
    auto t = build_table(dim == 3 ? riesz(1.0, 3) : bessel(0.5, dim), g);
    for (int k = 0; k < 5; ++k) {
      auto f = random_field(g, rng, k % 2 == 0);
      EXPECT_LT(max_rel_diff(convolve(*t, f), convolve_direct(*t, f)), 1e-9);
    }
  }
}

TEST(Convolve, NonnegativeInputsGiveNonnegativeOutput) {
  const Grid g(1, 64, 4.0);
  auto t = build_table(riesz(0.5, 1), g);
  std::mt19937_64 rng(2);
  auto out = convolve(*t, random_field(g, rng, true));
  EXPECT_TRUE(out.nonneg());
  EXPECT_GE(out.min(), 0.0);
  EXPECT_THROW(convolve(*t, Field(Grid(1, 32, 4.0))), GridMismatch);
}

TEST(ConvolveMeasure, LinearityAndClosedForm) {
  const Grid g(1, 512, 4.0);
  auto t = build_table(bessel(2.0, 1), g);
  const std::size_t i = 300;
  const Point loc{g.coord(300) - 1.0, 0, 0};
  auto one = convolve_measure(*t, AtomicMeasure(1, {{loc, 1.0}}));
  auto two = convolve_measure(*t, AtomicMeasure(1, {{loc, 2.0}}));
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(two[k], 2.0 * one[k], 1e-14 * two[k] + 1e-300);
  EXPECT_NEAR(two[i], 2.0 * std::exp(-1.0) / 2.0, 1e-9);
  EXPECT_EQ(convolve_measure(*t, AtomicMeasure(1, {{loc, 0.0}})).max(), 0.0);
  EXPECT_THROW(convolve_measure(*t, AtomicMeasure(1, {{{5.0, 0, 0}, 1.0}})), Error);
}

TEST(CheckTwoSided, Bounds) {
  auto c = check_two_sided(bessel(2.0, 1), Grid(1, 256, 4.0));
  EXPECT_GE(c.near_origin, 1.0);
  EXPECT_GE(c.shift, 1.0);
  EXPECT_LE(c.shift, std::exp(1.0) * (1.0 + 1e-9));
  EXPECT_GT(c.shift_samples, 0u);
  auto c2 = check_two_sided(bessel(0.5, 2), Grid(2, 64, 4.0));
  EXPECT_TRUE(std::isfinite(c2.near_origin));
  EXPECT_TRUE(std::isfinite(c2.shift));
  EXPECT_THROW(check_two_sided(bessel(0.5, 1), Grid(1, 64, 2.0)), ConfigError);
}
