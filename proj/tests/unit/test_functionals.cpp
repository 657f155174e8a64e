#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "captool/error.hpp"
#include "captool/functionals.hpp"

using namespace captool;

namespace {

const KernelSpec kSpec{KernelKind::Bessel, 0.5, 1};

GridSet interval(const Grid& g, double a, double b) {
  return GridSet::from_predicate(g, [&](const Point& x) { return x[0] >= a && x[0] <= b; });
}

Field bumps(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> C(-1.5, 1.5), W(0.15, 0.6);
  std::uniform_int_distribution<int> K(1, 3), A(-2, 1);
  const int k = K(rng);
  std::vector<double> v(g.size(), 0.0);
  for (int b = 0; b < k; ++b) {
    const double c = C(rng), w = W(rng), amp = std::exp2(A(rng));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.point(i)[0] - c;
      v[i] += amp * std::exp(-x * x / (w * w));
    }
  }
  return Field(g, std::move(v), true);
}

WitnessOptions witness_levels(int kmin, int kmax) {
  WitnessOptions o;
  o.levels.k_min = kmin;
  o.levels.k_max = kmax;
  return o;
}

}  // namespace

TEST(Gamma, Examples) {
  const Grid g(1, 256, 4.0);
  const double tol = 1e-3;
  SolverOptions o;
  o.tol = tol;
  auto E = interval(g, -0.4, 0.6);
  const double cap = capacity({kSpec, E, 2.0}, o).value;
  auto gv = gamma_functional(E.indicator(), kSpec, 2.0, o);
  EXPECT_NEAR(gv.value / cap, 1.0, 2 * tol);
  EXPECT_TRUE(gv.certified);
  EXPECT_EQ(gamma_functional(Field(g), kSpec, 2.0, o).value, 0.0);

  std::mt19937_64 rng(9);
  auto u = bumps(g, rng);
  const double a = gamma_functional(u, kSpec, 2.0, o).value;
  const double b = gamma_functional(scale(u, 2.0), kSpec, 2.0, o).value;
  EXPECT_NEAR(b / (2.0 * a), 1.0, 2 * tol);
}

TEST(Gamma, SubadditiveOnRandomPairs) {
  const Grid g(1, 128, 4.0);
  const double tol = 1e-3;
  SolverOptions o;
  o.tol = tol;
  std::mt19937_64 rng(31);
  for (int k = 0; k < 30; ++k) {
    auto u1 = bumps(g, rng), u2 = bumps(g, rng);
    const double g1 = gamma_functional(u1, kSpec, 2.0, o).value;
    const double g2 = gamma_functional(u2, kSpec, 2.0, o).value;
    const double g12 = gamma_functional(add(u1, u2), kSpec, 2.0, o).value;
    EXPECT_LE(g12, g1 + g2 + 3 * tol * (g1 + g2)) << "pair " << k;
  }
}

TEST(BetaValue, ZeroAndOneCellClosedForm) {
  const Grid g(1, 64, 4.0);
  EXPECT_EQ(beta_value(Field(g), Field(g), kSpec, 2.0), 0.0);
  auto t = build_table(kSpec, g);
  const double h = g.spacing(), f0 = 3.0;
  std::vector<double> v(g.size(), 0.0);
  v[20] = f0;
  Field f(g, v, true);
  for (double s : {1.5, 2.0, 2.5}) {
    // Only the cell holding f contributes: h f0^s (h T(0) f0)^{1-s}.
    const double want = h * std::pow(f0, s) * std::pow(h * t->sample({0, 0, 0}) * f0, 1.0 - s);
    EXPECT_NEAR(beta_value(Field(g), f, kSpec, s) / want, 1.0, 1e-12);
  }
  EXPECT_NEAR(beta_value(Field(g), f, kSpec, 2.0), f0 / t->sample({0, 0, 0}), 1e-12);
}

TEST(BetaValue, InfeasibleDensityRejected) {
  const Grid g(1, 64, 4.0);
  auto u = interval(g, 0.0, 1.0).indicator();
  try {
    beta_value(u, scale(u, 0.1), kSpec, 2.0);
    FAIL() << "expected FeasibilityError";
  } catch (const FeasibilityError& e) {
    EXPECT_GT(e.worst_violation(), 0.0);
    EXPECT_LE(e.worst_violation(), 1.0);
  }
}

TEST(BetaValue, DegreeOneHomogeneous) {
  const Grid g(1, 128, 4.0);
  std::mt19937_64 rng(2);
  auto f = bumps(g, rng);
  auto u = convolve(*build_table(kSpec, g), f);
  const double base = beta_value(u, f, kSpec, 2.0);
  for (double c : {1.0, 1.5, 4.0}) EXPECT_NEAR(beta_value(u, scale(f, c), kSpec, 2.0) / (c * base), 1.0, 1e-12);
}

TEST(BetaWitness, ZeroField) {
  const Grid g(1, 64, 4.0);
  auto v = beta_witness_from_choquet(Field(g), kSpec, 2.0, witness_levels(-6, 2));
  EXPECT_EQ(v.value, 0.0);
  EXPECT_EQ(v.witness->max(), 0.0);
}

TEST(BetaWitness, IndicatorInsideOneBallFeasible) {
  const Grid g(1, 64, 4.0);
  auto E = interval(g, 0.1, 0.35);
  auto v = beta_witness_from_choquet(E.indicator(), kSpec, 2.0, witness_levels(-6, 2));
  EXPECT_TRUE(std::isfinite(v.value));
  EXPECT_FALSE(v.certified);
  EXPECT_FALSE(v.flagged);
  EXPECT_GE(v.rescale, 1.0);
  EXPECT_GE(v.pieces, 1u);
  // Independent feasibility check through direct summation.
  auto Gw = convolve_direct(*build_table(kSpec, g), *v.witness);
  for (auto i : E.indices()) EXPECT_GE(Gw[i], 1.0 - 1e-9);
}

TEST(BetaWitness, IndicatorRatioStableUnderRefinement) {
  double ratio[2];
  int k = 0;
  for (int N : {256, 512}) {
    const Grid g(1, N, 4.0);
    auto E = interval(g, -0.6, 0.9);
    auto v = beta_witness_from_choquet(E.indicator(), kSpec, 2.0, witness_levels(-6, 2));
    EXPECT_LE(v.rescale, 100.0);
    ratio[k++] = v.value / capacity_value({kSpec, E, 2.0});
  }
  EXPECT_NEAR(ratio[1] / ratio[0], 1.0, 0.25);
}

TEST(BetaWitness, PolishOnlyLowersTheBound) {
  const Grid g(1, 128, 4.0);
  std::mt19937_64 rng(12);
  auto u = bumps(g, rng);
  auto opts = witness_levels(-10, 2);
  const double plain = beta_witness_from_choquet(u, kSpec, 2.0, opts).value;
  opts.polish_iters = 5;
  auto polished = beta_witness_from_choquet(u, kSpec, 2.0, opts);
  EXPECT_LE(polished.value, plain);
  EXPECT_NO_THROW(beta_value(u, *polished.witness, kSpec, 2.0));
}

TEST(KvUpper, Examples) {
  const Grid g(1, 64, 4.0);
  EXPECT_EQ(kv_upper(Field(g), kSpec, 2.0).value, 0.0);
  auto t = build_table(kSpec, g);
  std::vector<double> v(g.size(), 0.0);
  v[30] = -2.0;
  Field f(g, v, false);
  const double one_cell = 2.0 / t->sample({0, 0, 0});
  auto kv = kv_upper(f, kSpec, 2.0);
  EXPECT_LE(kv.value, one_cell * (1 + 1e-12));
  EXPECT_GT(kv.value, 0.0);
  EXPECT_FALSE(kv.certified);

  std::mt19937_64 rng(5);
  auto b = bumps(g, rng);
  EXPECT_LE(kv_upper(b, kSpec, 2.0).value, beta_objective(b, *t, 2.0) * (1 + 1e-12));
}

TEST(LambdaUpper, SurrogateLabelAndFiniteness) {
  const Grid g(1, 64, 4.0);
  EXPECT_EQ(lambda_upper(Field(g), kSpec, 2.0, witness_levels(-4, 2)).value, 0.0);
  auto v = lambda_upper(interval(g, 0.0, 0.8).indicator(), kSpec, 2.0, witness_levels(-4, 2));
  EXPECT_TRUE(std::isfinite(v.value));
  EXPECT_GT(v.value, 0.0);
  EXPECT_NE(v.label.find("surrogate"), std::string::npos);
  EXPECT_EQ(v.kind, FunctionalKind::LambdaUpper);
}

TEST(MultiplierNorm, Examples) {
  const Grid g(1, 64, 4.0);
  auto E = interval(g, -0.5, 0.5);
  const std::vector<GridSet> fam{E};
  EXPECT_EQ(multiplier_norm(Field(g), 2.0, kSpec, 2.0, fam).value, 0.0);
  const double cap = capacity_value({kSpec, E, 2.0});
  EXPECT_NEAR(multiplier_norm(E.indicator(), 3.0, kSpec, 2.0, fam).value, std::pow(E.measure() / cap, 1.0 / 3.0),
              1e-12);
  std::mt19937_64 rng(8);
  auto f = bumps(g, rng);
  auto family = default_family(f);
  const double a = multiplier_norm(f, 2.0, kSpec, 2.0, family).value;
  EXPECT_NEAR(multiplier_norm(scale(f, 2.0), 2.0, kSpec, 2.0, family).value / a, 2.0, 1e-12);
  EXPECT_THROW(multiplier_norm(f, 1.0, kSpec, 2.0, family), ConfigError);
}

TEST(MeasureNorm, Examples) {
  const Grid g(1, 128, 4.0);
  auto E = interval(g, -0.3, 0.6);
  const std::vector<GridSet> fam{E, interval(g, -2, 2)};
  EXPECT_EQ(measure_norm(AtomicMeasure(1, {}), g, kSpec, 2.0, fam).value, 0.0);
  const double tol = 1e-3;
  SolverOptions o;
  o.tol = tol;
  auto cm = capacity({kSpec, E, 2.0}, o);
  auto mu = AtomicMeasure::from_cell_masses(cm.mu_star);
  auto v = measure_norm(mu, g, kSpec, 2.0, {E}, o);
  EXPECT_NEAR(v.value, 1.0, 5 * tol);
  EXPECT_NEAR(measure_norm(mu.scaled(2.0), g, kSpec, 2.0, {E}, o).value / v.value, 2.0, 1e-12);
}

TEST(DyadicBoxes, CountAndPartition) {
  const Grid g(2, 16, 1.0);
  auto boxes = dyadic_boxes(g, 4);
  EXPECT_EQ(boxes.size(), 1u + 4u + 16u);
  std::size_t covered = 0;
  for (std::size_t k = 5; k < boxes.size(); ++k) covered += boxes[k].count();
  EXPECT_EQ(covered, g.size());
}
