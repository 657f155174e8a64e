#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <thread>

#include "captool/capacity.hpp"
#include "captool/error.hpp"

using namespace captool;

namespace {

KernelSpec bessel(double alpha, int dim) { return {KernelKind::Bessel, alpha, dim}; }
KernelSpec riesz(double alpha, int dim) { return {KernelKind::Riesz, alpha, dim}; }

GridSet ball(const Grid& g, Point c, double r) {
  return GridSet::from_predicate(g, [&](const Point& x) { return distance(x, c, g.dim()) < r; });
}

GridSet interval(const Grid& g, double a, double b) {
  return GridSet::from_predicate(g, [&](const Point& x) { return x[0] >= a && x[0] <= b; });
}

SolverOptions tight(double tol = 1e-4) {
  SolverOptions o;
  o.tol = tol;
  return o;
}

}  // namespace

TEST(Capacity, EmptySetIsZero) {
  const Grid g(1, 64, 4.0);
  auto r = capacity({bessel(0.5, 1), GridSet(g), 2.0});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.f_star.max(), 0.0);
  auto cm = capacitary_measure({bessel(0.5, 1), GridSet(g), 2.0});
  EXPECT_EQ(cm.identities[0], 1.0);
  EXPECT_EQ(cm.result.mu_star.max(), 0.0);
}

TEST(Capacity, RejectsBrokenHypotheses) {
  const Grid g(1, 64, 4.0);
  auto E = interval(g, 0, 1);
  EXPECT_THROW(capacity({bessel(1.0, 1), E, 2.0}), ConfigError);
  EXPECT_THROW(capacity({bessel(0.5, 1), E, 1.0}), ConfigError);
  EXPECT_THROW(capacity({bessel(0.5, 2), E, 2.0}), ConfigError);
  SolverOptions bad;
  bad.tol = 1.5;
  EXPECT_THROW(capacity({bessel(0.5, 1), E, 2.0}, bad), ConfigError);
}

TEST(Capacity, SingleCellClosedForm) {
  // One constraint cell x0: f = c T(. - x0)^{s'-1} by Hoelder, so
  // Cap = S^{1-s} with S = h^n sum_j T(x_j - x0)^{s'}.
  for (double s : {1.5, 2.0, 3.0}) {
    const Grid g(1, 128, 4.0);
    const auto spec = bessel(0.3, 1);
    std::vector<std::uint8_t> m(g.size(), 0);
    const std::int64_t i0 = 70;
    m[i0] = 1;
    auto r = capacity({spec, GridSet(g, m), s}, tight(1e-8));
    auto t = build_table(spec, g);
    const double sp = s / (s - 1.0);
    double S = 0.0;
    for (std::int64_t j = 0; j < g.n(); ++j) S += std::pow(t->sample({j - i0, 0, 0}), sp);
    S *= g.cell_volume();
    EXPECT_NEAR(r.value / std::pow(S, 1.0 - s), 1.0, 1e-7) << "s=" << s;
  }
}

TEST(Capacity, MonotoneUnderInclusion) {
  const Grid g(2, 32, 4.0);
  const auto spec = bessel(1.0, 2);
  const double tol = 1e-3;
  double prev = 0.0;
  for (double r : {0.3, 0.6, 0.9, 1.2}) {
    const double c = capacity({spec, ball(g, {0, 0, 0}, r), 2.0}, tight(tol)).value;
    EXPECT_LE(prev, c * (1 + 2 * tol));
    prev = c;
  }
}

TEST(Capacity, SubadditiveOnRandomPairs) {
  const Grid g(1, 128, 4.0);
  const auto spec = bessel(0.5, 1);
  const double tol = 1e-3;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.8, 1.8), W(0.1, 0.8);
  for (int k = 0; k < 50; ++k) {
    const double a = U(rng), b = U(rng);
    auto E1 = interval(g, a, a + W(rng));
    auto E2 = interval(g, b, b + W(rng));
    const double c1 = capacity({spec, E1, 2.0}, tight(tol)).value;
    const double c2 = capacity({spec, E2, 2.0}, tight(tol)).value;
    const double c12 = capacity({spec, E1.unite(E2), 2.0}, tight(tol)).value;
    EXPECT_LE(c12, c1 + c2 + 3 * tol * (c1 + c2)) << "pair " << k;
  }
}

TEST(Capacity, PrimalFeasibleAndDualCertified) {
  const Grid g(2, 16, 3.0);
  for (auto spec : {bessel(1.0, 2), riesz(0.5, 2)}) {
    const double s = 1.8, tol = 1e-3;
    auto E = ball(g, {0.2, -0.1, 0}, 0.9);
    auto r = capacity({spec, E, s}, tight(tol));
    auto t = build_table(spec, g);

    // Independent evaluation through direct summation.
    auto Kf = convolve_direct(*t, r.f_star);
    for (auto i : E.indices()) EXPECT_GE(Kf[i], 1.0 - tol);
    const double primal = integrate(pow(r.f_star, s));
    EXPECT_NEAR(primal / r.value, 1.0, 1e-9);

    const double sp = s / (s - 1.0);
    auto gmu = scale(convolve_direct(*t, r.mu_star), 1.0 / g.cell_volume());
    double mass = 0.0;
    for (auto v : r.mu_star.values()) mass += v;
    for (std::size_t i = 0; i < r.mu_star.size(); ++i)
      if (!E.contains(i)) EXPECT_EQ(r.mu_star[i], 0.0);
    // s times the dual objective of the (1/s)-normalised program.
    const double dual = s * (mass - integrate(pow(gmu, sp)) / sp);
    EXPECT_LE(std::fabs(r.value - dual) / r.value, tol);
    EXPECT_LE(dual, r.value * (1 + 1e-12));
  }
}

TEST(CapacitaryMeasure, IdentitiesAndPotential) {
  const double tol = 1e-3;
  const Grid g1(1, 256, 4.0);
  const Grid g2(2, 32, 4.0);
  const std::vector<CapacityProblem> problems = {
      {bessel(0.5, 1), interval(g1, -0.5, 0.5), 2.0},
      {bessel(0.5, 1), interval(g1, -1.0, 0.3).unite(interval(g1, 1.0, 1.5)), 1.5},
      {bessel(1.0, 2), ball(g2, {0, 0, 0}, 0.7), 2.0},
      {riesz(0.5, 1), interval(g1, 0.0, 1.0), 2.0},
  };
  for (const auto& p : problems) {
    auto cm = capacitary_measure(p, tight(tol));
    for (double id : cm.identities) {
      EXPECT_GE(id, 1 - 5 * tol);
      EXPECT_LE(id, 1 + 5 * tol);
    }
    EXPECT_GE(cm.min_potential_on_set, 1 - 5 * tol);
    EXPECT_LE(cm.result.gap, tol);
  }
}

TEST(CapacitaryMeasure, PotentialIsConvolvePowerConvolveChain) {
  const Grid g(1, 128, 4.0);
  const auto spec = riesz(0.5, 1);
  auto r = capacity({spec, interval(g, 0.0, 1.0), 2.0});
  auto t = build_table(spec, g);
  // s = 2 so s' - 1 = 1: V = G * (G * mu / h).
  auto chain = convolve(*t, scale(convolve(*t, r.mu_star), 1.0 / g.cell_volume()));
  auto V = nonlinear_potential(*t, r.mu_star, 2.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(V[i], chain[i], 1e-12 * chain.max());
    EXPECT_NEAR(r.V[i], V[i], 1e-12 * chain.max());
  }
  auto again = capacity({spec, interval(g, 0.0, 1.0), 2.0});
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(again.mu_star[i], r.mu_star[i]);
    EXPECT_EQ(again.V[i], r.V[i]);
  }
  EXPECT_EQ(again.value, r.value);
}

TEST(Capacity, RieszCriticalScalingDim1) {
  // n - alpha s = 0. On [-L, L] the capacity decays like 1/log(L/d), so the
  // ratio for lengths 2 and 1 tends to 1 from above as L grows, and the
  // excess over 1 matches (x / (x - log 2) - 1) for a fitted x = log L + a.
  std::vector<double> excess;
  for (auto [N, L] : {std::pair{512, 8.0}, std::pair{1024, 16.0}, std::pair{2048, 32.0}}) {
    const Grid g(1, N, L);
    const auto spec = riesz(0.5, 1);
    const double c1 = capacity({spec, interval(g, -0.5, 0.5), 2.0}, tight()).value;
    const double c2 = capacity({spec, interval(g, -1.0, 1.0), 2.0}, tight()).value;
    excess.push_back(c2 / c1 - 1.0);
  }
  EXPECT_GT(excess[2], 0.0);
  EXPECT_LT(excess[1], excess[0]);
  EXPECT_LT(excess[2], excess[1]);
  const double x0 = std::log(2.0) * (1.0 + 1.0 / excess[0]);
  const double x2 = x0 + 2.0 * std::log(2.0);
  EXPECT_NEAR(excess[2], std::log(2.0) / (x2 - std::log(2.0)), 0.01);
}

TEST(Capacity, RieszScalingExponentDim1) {
  const Grid g(1, 2048, 32.0);
  for (auto [alpha, s] : {std::pair{0.25, 1.5}, std::pair{0.5, 1.25}}) {
    const auto spec = riesz(alpha, 1);
    const double c1 = capacity({spec, interval(g, -0.5, 0.5), s}, tight()).value;
    const double c2 = capacity({spec, interval(g, -1.0, 1.0), s}, tight()).value;
    EXPECT_NEAR(std::log2(c2 / c1), 1.0 - alpha * s, 0.05);
  }
}

TEST(QuasiAdditivity, SetInsideOneBall) {
  const Grid g(2, 32, 2.0);
  auto cover = unit_ball_cover(g);
  const CapacityProblem p{bessel(1.0, 2), ball(g, {0.05, 0.05, 0}, 0.2), 2.0};
  auto q = quasi_additivity_ratio(p, cover);
  // Each piece is at most Cap(E), so the ratio is bounded by the number of
  // balls meeting E; that count is itself at most the neighbour bound.
  EXPECT_LE(q.ratio, q.balls.size() * (1 + 2e-3));
  EXPECT_LE(static_cast<int>(q.balls.size()), cover.neighbour_bound);
  EXPECT_GE(q.ratio, 1.0 - 2e-3);
  EXPECT_EQ(q.pieces.size(), q.balls.size());

  std::vector<std::uint8_t> one(g.size(), 0);
  one[g.flatten({16, 16, 0})] = 1;
  auto tiny = quasi_additivity_ratio({bessel(1.0, 2), GridSet(g, one), 2.0}, cover);
  EXPECT_LE(tiny.ratio, cover.multiplicity * (1 + 1e-9));
  EXPECT_NEAR(tiny.ratio, static_cast<double>(tiny.balls.size()), 1e-12);
}

TEST(QuasiAdditivity, TwoIntervalsStableUnderRefinement) {
  double ratio[2];
  int k = 0;
  for (int N : {256, 512}) {
    const Grid g(1, N, 4.0);
    const CapacityProblem p{bessel(0.5, 1), interval(g, -2.0, -1.0).unite(interval(g, 2.0, 3.0)), 2.0};
    auto q = quasi_additivity_ratio(p, unit_ball_cover(g));
    EXPECT_TRUE(std::isfinite(q.ratio));
    ratio[k++] = q.ratio;
  }
  EXPECT_NEAR(ratio[1] / ratio[0], 1.0, 0.15);
}

TEST(QuasiAdditivity, RejectsNullSet) {
  const Grid g(1, 64, 4.0);
  EXPECT_THROW(quasi_additivity_ratio({bessel(0.5, 1), GridSet(g), 2.0}, unit_ball_cover(g)), ConfigError);
}

TEST(CapacityCache, SolvesOnceAcrossThreads) {
  CapacityCache cache;
  const Grid g(1, 256, 4.0);
  const CapacityProblem p{bessel(0.5, 1), interval(g, 0.0, 0.7), 2.0};
  std::vector<double> got(4);
  std::vector<std::thread> ts;
  for (int i = 0; i < 4; ++i) ts.emplace_back([&, i] { got[i] = cache.get(p, {}).value; });
  for (auto& t : ts) t.join();
  EXPECT_EQ(cache.solves(), 1u);
  for (double v : got) EXPECT_EQ(v, capacity(p).value);
}

TEST(CapacityCache, DiskLayerRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "captool-cache-test";
  std::filesystem::remove_all(dir);
  ::setenv("CAPTOOL_CACHE_DIR", dir.c_str(), 1);
  const Grid g(1, 128, 4.0);
  const CapacityProblem p{bessel(0.5, 1), interval(g, -0.3, 0.4), 2.0};
  CapacityCache first, second;
  const double a = first.get(p, {}).value;
  const double b = second.get(p, {}).value;
  ::unsetenv("CAPTOOL_CACHE_DIR");
  EXPECT_EQ(first.solves(), 1u);
  EXPECT_EQ(second.solves(), 0u);
  EXPECT_EQ(a, b);
  std::filesystem::remove_all(dir);
}

TEST(SolveDominatingDensity, IndicatorMatchesCapacity) {
  const Grid g(1, 128, 4.0);
  auto E = interval(g, -0.4, 0.6);
  const auto spec = bessel(0.5, 1);
  EXPECT_EQ(solve_dominating_density(spec, E.indicator(), 2.0).value, capacity({spec, E, 2.0}).value);
}
