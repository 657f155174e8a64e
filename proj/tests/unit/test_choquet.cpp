#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "captool/choquet.hpp"
#include "captool/error.hpp"

using namespace captool;

namespace {

const KernelSpec kSpec{KernelKind::Bessel, 0.5, 1};
const Grid kGrid(1, 256, 4.0);

GridSet interval(double a, double b) {
  return GridSet::from_predicate(kGrid, [&](const Point& x) { return x[0] >= a && x[0] <= b; });
}

Field bump(double c, double width, double amp) {
  return Field::sample(
      kGrid, [&](const Point& x) { return amp * std::exp(-(x[0] - c) * (x[0] - c) / (width * width)); }, true);
}

ChoquetConfig levels(int kmin, int kmax, int sub = 1) {
  ChoquetConfig cfg;
  cfg.k_min = kmin;
  cfg.k_max = kmax;
  cfg.subdivisions = sub;
  return cfg;
}

}  // namespace

TEST(Choquet, ZeroField) {
  auto r = choquet_integral(Field(kGrid), kSpec, 2.0, levels(-4, 2));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.upper, 0.0);
}

TEST(Choquet, IndicatorGivesCapacity) {
  auto E = interval(-0.5, 0.7);
  const double cap = capacity_value({kSpec, E, 2.0});
  for (int sub : {1, 4}) {
    auto r = choquet_integral(E.indicator(), kSpec, 2.0, levels(-6, 3, sub));
    EXPECT_NEAR(r.lower / cap, 1.0, 1e-12);
    EXPECT_NEAR(r.upper / cap, 1.0, 1e-12);
    EXPECT_LE(r.lower, cap * (1 + 1e-12));
    EXPECT_GE(r.upper, cap * (1 - 1e-12));
  }
}

TEST(Choquet, TwiceIndicator) {
  auto E = interval(0.0, 1.0);
  const double cap = capacity_value({kSpec, E, 2.0});
  // Hand sum: levels 1/2, 1, 2 each see E; widths 1/2 + 1/2 + 1 = 2.
  auto r = choquet_integral(scale(E.indicator(), 2.0), kSpec, 2.0, levels(-1, 3));
  EXPECT_NEAR(r.value, 2.0 * cap, 1e-12 * cap);
}

TEST(Choquet, TopTailWhenLevelsEndBelowMax) {
  auto E = interval(0.0, 1.0);
  const double cap = capacity_value({kSpec, E, 2.0});
  auto r = choquet_integral(scale(E.indicator(), 3.0), kSpec, 2.0, levels(-2, 1));
  EXPECT_NEAR(r.lower, 2.0 * cap, 1e-12 * cap);
  EXPECT_NEAR(r.upper, 3.0 * cap, 1e-12 * cap);
}

TEST(ChoquetOfPower, Examples) {
  auto E = interval(-1.0, 0.2);
  const double cap = capacity_value({kSpec, E, 2.0});
  for (double q : {0.5, 1.0, 2.5})
    EXPECT_NEAR(choquet_of_power(E.indicator(), q, kSpec, 2.0, levels(-4, 4)).value, cap, 1e-12 * cap);
  EXPECT_NEAR(choquet_of_power(scale(E.indicator(), 2.0), 2.0, kSpec, 2.0, levels(-4, 4)).value, 4.0 * cap,
              1e-12 * cap);
  auto w = bump(0.3, 0.5, 1.7);
  EXPECT_EQ(choquet_of_power(w, 1.0, kSpec, 2.0, levels(-6, 2)).value,
            choquet_integral(w, kSpec, 2.0, levels(-6, 2)).value);
  EXPECT_THROW(choquet_of_power(w, 0.0, kSpec, 2.0, levels(-6, 2)), ConfigError);
}

TEST(ChoquetOfPower, LevelSubstitution) {
  auto w = bump(0.0, 0.7, 3.0);
  const double q = 1.7;
  auto wq = pow(w, q);
  for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    auto a = superlevel_set(wq, t);
    auto b = superlevel_set(w, std::pow(t, 1.0 / q));
    EXPECT_LE(static_cast<long>(a.count()) - static_cast<long>(b.count()), 1);
    EXPECT_GE(static_cast<long>(a.count()) - static_cast<long>(b.count()), -1);
  }
}

TEST(Choquet, MonotoneInIntegrand) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double tol = 1e-3;
  for (int k = 0; k < 10; ++k) {
    auto w1 = bump(U(rng) - 0.5, 0.2 + 0.5 * U(rng), 0.5 + U(rng));
    auto w2 = add(w1, bump(U(rng) - 0.5, 0.2 + 0.5 * U(rng), U(rng)));
    auto cfg = levels(-8, 2);
    const double a = choquet_integral(w1, kSpec, 2.0, cfg).value;
    const double b = choquet_integral(w2, kSpec, 2.0, cfg).value;
    EXPECT_LE(a, b * (1 + 3 * tol));
  }
}

TEST(Choquet, BracketControlAndRefinement) {
  auto w = bump(0.2, 0.6, 1.3);
  auto coarse = choquet_integral(w, kSpec, 2.0, levels(-10, 1, 1));
  auto quarter = choquet_integral(w, kSpec, 2.0, levels(-10, 1, 4));
  // One octave of width, plus the head term below the first level.
  const double head = coarse.per_level.front().t * coarse.cap_support;
  EXPECT_LE(coarse.upper - coarse.lower, coarse.lower + head);
  EXPECT_LE((coarse.upper - coarse.lower) / coarse.lower, 1.01);
  const double wc = coarse.upper - coarse.lower, wq = quarter.upper - quarter.lower;
  EXPECT_LE(wq, 0.5 * wc);
  // The quarter-octave bracket nests inside the octave bracket.
  EXPECT_GE(quarter.lower, coarse.lower * (1 - 3e-3));
  EXPECT_LE(quarter.upper, coarse.upper * (1 + 3e-3));
}

TEST(Choquet, PerLevelCapacitiesNonIncreasing) {
  auto w = add(bump(-1.0, 0.3, 2.0), bump(1.0, 0.5, 0.7));
  const double tol = 1e-3;
  auto r = choquet_integral(w, kSpec, 2.0, levels(-8, 2, 2));
  for (std::size_t j = 1; j < r.per_level.size(); ++j) {
    EXPECT_LE(r.per_level[j].cap_closed, r.per_level[j - 1].cap_closed * (1 + 2 * tol));
    EXPECT_LE(r.per_level[j].cap_open, r.per_level[j].cap_closed * (1 + 2 * tol));
  }
}

TEST(Choquet, ScalingByTwoWithAdaptiveLevels) {
  auto w = bump(0.0, 0.4, 1.1);
  auto a = choquet_integral(w, kSpec, 2.0, adaptive_levels(w, 10, 4));
  auto w2 = scale(w, 2.0);
  auto b = choquet_integral(w2, kSpec, 2.0, adaptive_levels(w2, 10, 4));
  EXPECT_NEAR(b.value / a.value, 2.0, 1e-12);
}

TEST(ChoquetConfig, Validation) {
  EXPECT_THROW(levels(2, 2).validate(), ConfigError);
  EXPECT_THROW(levels(0, 2, 0).validate(), ConfigError);
  EXPECT_EQ(levels(-1, 1, 2).levels().size(), 5u);
}
