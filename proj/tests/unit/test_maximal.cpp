#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "captool/error.hpp"
#include "captool/maximal.hpp"

using namespace captool;

namespace {

Field random_field(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> Z;
  std::vector<double> v(g.size());
  for (auto& x : v) x = Z(rng);
  return Field(g, std::move(v), false);
}

}  // namespace

TEST(RadiusSet, AutomaticRadii) {
  const Grid g(1, 64, 4.0);
  auto rs = RadiusSet::automatic(g);
  ASSERT_FALSE(rs.radii().empty());
  EXPECT_DOUBLE_EQ(rs.radii().front(), g.spacing());
  EXPECT_DOUBLE_EQ(rs.radii().back(), 1.0);
  EXPECT_EQ(rs.radii().size(), 4u);  // h = 1/8: 1/8, 1/4, 1/2, 1
  EXPECT_THROW(RadiusSet(g, {0.01}), ConfigError);
  EXPECT_THROW(RadiusSet(g, {1.5}), ConfigError);
  EXPECT_THROW(RadiusSet::automatic(Grid(1, 4, 4.0)), ConfigError);
}

TEST(LocalMaximal, ConstantField) {
  const Grid g(2, 64, 4.0);
  const double c = 0.7;
  auto f = Field::sample(g, [&](const Point& x) { return std::hypot(x[0], x[1]) < 2.5 ? c : 0.0; }, true);
  auto M = local_maximal(f, RadiusSet::automatic(g));
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::hypot(g.point(i)[0], g.point(i)[1]) < 1.4) EXPECT_EQ(M[i], c);
}

TEST(LocalMaximal, DominatesAbsoluteValue) {
  const Grid g(2, 32, 2.0);
  std::mt19937_64 rng(3);
  auto f = random_field(g, rng);
  auto M = local_maximal(f, RadiusSet::automatic(g));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_GE(M[i], std::fabs(f[i]));
}

TEST(LocalMaximal, HalfIntervalAtOne) {
  const Grid g(1, 1024, 4.0);
  auto f = Field::sample(g, [](const Point& x) { return x[0] >= 0.0 && x[0] <= 0.5 ? 1.0 : 0.0; }, true);
  auto M = local_maximal(f, RadiusSet::automatic(g));
  const auto i = static_cast<std::size_t>(g.cell_of({1.0 + 0.5 * g.spacing(), 0, 0}));
  EXPECT_NEAR(M[i], 0.25, 2 * g.spacing());
}

TEST(LocalMaximal, SublinearAndHomogeneous) {
  const Grid g(1, 128, 4.0);
  auto radii = RadiusSet::automatic(g);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> C(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    auto f = random_field(g, rng), h = random_field(g, rng);
    auto Mf = local_maximal(f, radii), Mh = local_maximal(h, radii), Mfh = local_maximal(add(f, h), radii);
    const double c = C(rng);
    auto Mcf = local_maximal(scale(f, c), radii);
    auto M2f = local_maximal(scale(f, 2.0), radii);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_LE(Mfh[i], (Mf[i] + Mh[i]) * (1 + 1e-14)) << "pair " << k;
      EXPECT_NEAR(Mcf[i], c * Mf[i], 1e-14 * c * Mf[i]) << "pair " << k;
      EXPECT_EQ(M2f[i], 2.0 * Mf[i]);
    }
  }
}

TEST(LocalMaximal, MonotoneUnderRadiusRefinement) {
  const Grid g(1, 256, 4.0);
  std::mt19937_64 rng(4);
  auto f = random_field(g, rng);
  auto coarse = local_maximal(f, RadiusSet::automatic(g));
  auto fine = local_maximal(f, RadiusSet(g, {0.1, 0.3, 0.7, 0.9}));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_GE(fine[i], coarse[i]);
}

TEST(GlobalMaximal, RieszOnly) {
  const Grid g(1, 64, 4.0);
  auto f = Field::sample(g, [](const Point& x) { return std::fabs(x[0]) < 0.5 ? 1.0 : 0.0; }, true);
  EXPECT_THROW(global_maximal(f, {KernelKind::Bessel, 0.5, 1}), ConfigError);
  auto Mg = global_maximal(f, {KernelKind::Riesz, 0.5, 1});
  auto Ml = local_maximal(f, RadiusSet::automatic(g));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_GE(Mg[i], Ml[i]);
  EXPECT_GT(Mg[0], 0.0);
  EXPECT_EQ(Ml[0], 0.0);
}

TEST(PotentialDomination, Examples) {
  const KernelSpec spec{KernelKind::Bessel, 0.5, 1};
  const Grid g(1, 256, 4.0);
  auto bump = Field::sample(g, [](const Point& x) { return std::exp(-x[0] * x[0]); }, true);
  const double broad = potential_maximal_domination(bump, 1.0, spec);
  EXPECT_GE(broad, 1.0);
  // The sup sits at the clipped boundary cells where G*h decays exponentially.
  EXPECT_LT(broad, 2.5);
  EXPECT_THROW(potential_maximal_domination(Field(g), 1.0, spec), ConfigError);
  EXPECT_THROW(potential_maximal_domination(bump, 0.0, spec), ConfigError);

  // Near-atomic h: q = 0.2 below the threshold 0.5 against q = 0.6 above it.
  std::vector<double> v(g.size(), 0.0);
  v[g.size() / 2] = 1.0;
  Field atom(g, v, true);
  const double supra = potential_maximal_domination(atom, 0.6, spec);
  const double sub = potential_maximal_domination(atom, 0.2, spec);
  EXPECT_GE(supra, 1.0);
  EXPECT_GE(sub, 2.0 * supra);
}
