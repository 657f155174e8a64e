#include "captool/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "captool/error.hpp"
#include "captool/parallel.hpp"

namespace captool {

std::string to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::Gamma: return "gamma";
    case FunctionalKind::Beta: return "beta";
    case FunctionalKind::LambdaUpper: return "lambda_upper";
    case FunctionalKind::KvUpper: return "kv_upper";
    case FunctionalKind::Multiplier: return "multiplier";
    case FunctionalKind::MeasureNorm: return "measure_norm";
  }
  return "unknown";
}

FunctionalValue gamma_functional(const Field& u, const KernelSpec& spec, double s, const SolverOptions& opts) {
  auto r = solve_dominating_density(spec, pow(u, 1.0 / s), s, opts);
  FunctionalValue v;
  v.kind = FunctionalKind::Gamma;
  v.value = r.value;
  v.witness = r.f_star;
  v.certified = true;
  v.label = "gamma";
  return v;
}

double beta_objective(const Field& f, const KernelTable& table, double s) {
  auto g = convolve(table, f);
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] > 0.0) sum += std::pow(f[i], s) * std::pow(g[i], 1.0 - s);
  return sum * f.grid().cell_volume();
}

double beta_value(const Field& u, const Field& f, const KernelSpec& spec, double s, double rel_slack) {
  if (!f.nonneg()) throw ConfigError("beta_value needs a nonnegative density");
  if (!(u.grid() == f.grid())) throw GridMismatch("beta_value: u and f live on different grids");
  auto table = shared_table(spec, f.grid());
  auto g = convolve(*table, f);
  double worst = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double need = std::fabs(u[i]);
    if (g[i] < need * (1.0 - rel_slack)) worst = std::max(worst, (need - g[i]) / need);
  }
  if (worst > 0.0)
    throw FeasibilityError("beta_value: G*f < |u| somewhere (worst relative violation " + std::to_string(worst) + ")",
                           worst);
  if (f.max() == 0.0) return 0.0;
  return beta_objective(f, *table, s);
}

namespace {

// Objective gradient: h^n [s f^{s-1} g^{1-s} + (1-s) G*(f^s g^{-s})].
std::vector<double> beta_gradient(const Field& f, const KernelTable& table, double s) {
  auto g = convolve(table, f);
  std::vector<double> w(f.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] > 0.0) w[i] = std::pow(f[i], s) * std::pow(g[i], -s);
  std::vector<double> cw(f.size());
  convolve_into(table, w, cw);
  std::vector<double> grad(f.size());
  const double vol = f.grid().cell_volume();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double a = f[i] > 0.0 ? s * std::pow(f[i], s - 1.0) * std::pow(g[i], 1.0 - s) : 0.0;
    grad[i] = vol * (a + (1.0 - s) * cw[i]);
  }
  return grad;
}

// Least c >= 1 with G*(cF) >= u; INFINITY if some u > 0 sees G*F = 0.
double rescale_constant(const Field& u, const Field& GF) {
  double c = 1.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] <= 0.0) continue;
    if (GF[i] <= 0.0) return INFINITY;
    c = std::max(c, u[i] / GF[i]);
  }
  return c;
}

Field polish(const Field& u, Field f, const KernelTable& table, double s, int iters) {
  double best = beta_objective(f, table, s);
  for (int it = 0; it < iters; ++it) {
    const auto grad = beta_gradient(f, table, s);
    double gmax = 0.0;
    for (double x : grad) gmax = std::max(gmax, std::fabs(x));
    if (gmax == 0.0) break;
    bool improved = false;
    for (double step = 0.5 * f.max() / gmax; step > 1e-6 * f.max() / gmax; step *= 0.5) {
      std::vector<double> v(f.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, f[i] - step * grad[i]);
      Field cand(f.grid(), std::move(v), true);
      const double c = rescale_constant(u, convolve(table, cand));
      if (!std::isfinite(c)) continue;
      cand = scale(cand, c * (1.0 + 1e-12));
      const double val = beta_objective(cand, table, s);
      if (val < best) {
        best = val;
        f = std::move(cand);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return f;
}

}  // namespace

FunctionalValue beta_witness_from_choquet(const Field& u, const KernelSpec& spec, double s,
                                          const WitnessOptions& opts) {
  opts.levels.validate();
  if (!u.nonneg()) throw ConfigError("beta witness needs u >= 0");
  FunctionalValue out;
  out.kind = FunctionalKind::Beta;
  out.label = "beta witness (dyadic bands x unit-ball cover)";
  const Grid& grid = u.grid();
  if (u.max() == 0.0) {
    out.witness = Field(grid);
    return out;
  }
  if (u.max() > std::exp2(opts.levels.k_max))
    throw ConfigError("beta witness: max u exceeds 2^k_max; widen the level range");

  const auto cover = unit_ball_cover(grid);
  struct Piece {
    int k;
    GridSet set;
  };
  std::vector<Piece> pieces;
  for (int k = opts.levels.k_min + 1; k <= opts.levels.k_max; ++k) {
    const double lo = std::exp2(k - 1), hi = std::exp2(k);
    std::vector<std::uint8_t> m(grid.size(), 0);
    for (std::size_t i = 0; i < grid.size(); ++i) m[i] = u[i] > lo && u[i] <= hi;
    GridSet band(grid, std::move(m));
    if (band.empty()) continue;
    for (const auto& b : cover.balls) {
      auto piece = band.intersect(b);
      if (!piece.empty()) pieces.push_back({k, std::move(piece)});
    }
  }

  auto table = shared_table(spec, grid);
  const SolverOptions& sopt = opts.levels.solver;
  std::vector<double> caps(pieces.size());
  parallel_for(pieces.size(), opts.jobs, [&](std::size_t p) {
    caps[p] = capacity_value({spec, pieces[p].set, s}, sopt);
  });
  const double cap_scale = *std::max_element(caps.begin(), caps.end());

  const double sp = s / (s - 1.0);
  std::vector<double> F(grid.size(), 0.0);
  std::mutex fm;
  std::vector<std::uint8_t> kept(pieces.size(), 0);
  for (std::size_t p = 0; p < pieces.size(); ++p) kept[p] = caps[p] >= 10.0 * sopt.tol * cap_scale;
  parallel_for(pieces.size(), opts.jobs, [&](std::size_t p) {
    if (!kept[p]) return;
    auto r = capacity({spec, pieces[p].set, s}, sopt);
    std::vector<double> g(grid.size());
    convolve_into(*table, r.mu_star.values(), g);
    const double weight = std::exp2(pieces[p].k);
    std::vector<double> Fp(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double f = std::pow(std::max(g[i] / grid.cell_volume(), 1e-300), sp - 1.0);
      Fp[i] = weight * f * std::pow(r.V[i], s - 1.0);
    }
    std::lock_guard lock(fm);
    for (std::size_t i = 0; i < grid.size(); ++i) F[i] = std::max(F[i], Fp[i]);
  });
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    if (kept[p]) {
      ++out.pieces;
    } else {
      ++out.dropped;
      out.dropped_contribution += std::exp2(pieces[p].k) * caps[p];
    }
  }

  Field Ff(grid, std::move(F), true);
  const double c = rescale_constant(u, convolve(*table, Ff));
  if (!std::isfinite(c)) throw WitnessQualityError("beta witness: potential vanishes where u > 0");
  // The tiny margin keeps the exact tie at the argmax on the feasible side.
  Field w = scale(Ff, c * (1.0 + 1e-12));
  if (opts.polish_iters > 0) w = polish(u, std::move(w), *table, s, opts.polish_iters);
  out.rescale = c;
  out.flagged = c > opts.max_rescale;
  out.value = beta_value(u, w, spec, s);
  out.witness = std::move(w);
  return out;
}

FunctionalValue kv_upper(const Field& f, const KernelSpec& spec, double s) {
  FunctionalValue out;
  out.kind = FunctionalKind::KvUpper;
  out.label = "kv upper bound over mollified candidates";
  const Grid& grid = f.grid();
  auto af = abs(f);
  if (af.max() == 0.0) {
    out.witness = Field(grid);
    return out;
  }
  auto table = shared_table(spec, grid);
  const int n = grid.dim();
  std::vector<Field> candidates{af};
  for (int r : {1, 2, 4}) {
    std::vector<std::array<std::int64_t, 3>> offs;
    for (std::int64_t a = -r; a <= r; ++a)
      for (std::int64_t b = (n > 1 ? -r : 0); b <= (n > 1 ? r : 0); ++b)
        for (std::int64_t c = (n > 2 ? -r : 0); c <= (n > 2 ? r : 0); ++c)
          if (a * a + b * b + c * c <= r * r) offs.push_back({a, b, c});
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto x = grid.unflatten(i);
      double sum = 0.0;
      int cnt = 0;
      for (const auto& o : offs) {
        std::array<std::int64_t, 3> y{x[0] + o[0], x[1] + o[1], x[2] + o[2]};
        bool inside = true;
        for (int d = 0; d < n; ++d) inside = inside && y[d] >= 0 && y[d] < grid.n();
        if (!inside) continue;
        sum += af[grid.flatten(y)];
        ++cnt;
      }
      v[i] = sum / cnt;
    }
    Field m(grid, std::move(v), true);
    double c = 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (af[i] > 0.0) c = std::max(c, af[i] / m[i]);
    candidates.push_back(scale(m, c));
  }
  double best = INFINITY;
  for (auto& h : candidates) {
    const double val = beta_objective(h, *table, s);
    if (val < best) {
      best = val;
      out.witness = h;
    }
  }
  out.value = best;
  return out;
}

FunctionalValue lambda_upper(const Field& u, const KernelSpec& spec, double s, const WitnessOptions& opts) {
  auto v = beta_witness_from_choquet(u, spec, s, opts);
  v.kind = FunctionalKind::LambdaUpper;
  v.label = "lambda-surrogate via the beta witness";
  return v;
}

std::vector<GridSet> dyadic_boxes(const Grid& grid, int min_cells) {
  std::vector<GridSet> out;
  const int n = grid.dim();
  for (std::int64_t side = grid.n(); side >= min_cells; side /= 2) {
    const std::int64_t per_axis = grid.n() / side;
    std::int64_t total = 1;
    for (int d = 0; d < n; ++d) total *= per_axis;
    for (std::int64_t b = 0; b < total; ++b) {
      std::array<std::int64_t, 3> box{0, 0, 0};
      std::int64_t rem = b;
      for (int d = n - 1; d >= 0; --d) {
        box[d] = rem % per_axis;
        rem /= per_axis;
      }
      std::vector<std::uint8_t> m(grid.size(), 0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto x = grid.unflatten(i);
        bool in = true;
        for (int d = 0; d < n; ++d) in = in && x[d] / side == box[d];
        m[i] = in;
      }
      out.emplace_back(grid, std::move(m));
    }
  }
  return out;
}

std::vector<GridSet> default_family(const Field& f) {
  auto family = dyadic_boxes(f.grid());
  auto af = abs(f);
  const double top = af.max();
  if (top > 0.0) {
    const int kmax = static_cast<int>(std::floor(std::log2(top)));
    for (int k = kmax; k > kmax - 12; --k) {
      auto set = closed_superlevel_set(af, std::exp2(k));
      if (!set.empty()) family.push_back(std::move(set));
    }
  }
  return family;
}

namespace {

template <class Num>
FunctionalValue family_sup(FunctionalKind kind, const std::string& label, const KernelSpec& spec, double s,
                           const std::vector<GridSet>& family, const SolverOptions& opts, int jobs, Num&& ratio) {
  if (family.empty()) throw ConfigError("set family must be nonempty");
  std::vector<double> caps(family.size(), 0.0);
  parallel_for(family.size(), jobs, [&](std::size_t k) {
    if (!family[k].empty()) caps[k] = capacity_value({spec, family[k], s}, opts);
  });
  FunctionalValue out;
  out.kind = kind;
  out.label = label;
  for (std::size_t k = 0; k < family.size(); ++k) {
    if (caps[k] <= opts.tol) {
      ++out.skipped;
      continue;
    }
    out.value = std::max(out.value, ratio(family[k], caps[k]));
  }
  return out;
}

}  // namespace

FunctionalValue multiplier_norm(const Field& f, double p, const KernelSpec& spec, double s,
                                const std::vector<GridSet>& family, const SolverOptions& opts, int jobs) {
  if (!(p > 1.0)) throw ConfigError("multiplier norm needs p > 1");
  auto fp = pow(f, p);
  return family_sup(FunctionalKind::Multiplier, "multiplier norm over a finite family (lower bound)", spec, s,
                    family, opts, jobs, [&](const GridSet& K, double cap) {
                      double sum = 0.0;
                      for (auto i : K.indices()) sum += fp[i];
                      return std::pow(sum * K.grid().cell_volume() / cap, 1.0 / p);
                    });
}

FunctionalValue measure_norm(const AtomicMeasure& mu, const Grid& grid, const KernelSpec& spec, double s,
                             const std::vector<GridSet>& family, const SolverOptions& opts, int jobs) {
  for (const auto& K : family)
    if (!(K.grid() == grid)) throw GridMismatch("measure_norm: family member on a different grid");
  if (mu.dim() != grid.dim()) throw GridMismatch("measure_norm: measure dim differs from grid dim");
  auto v = family_sup(FunctionalKind::MeasureNorm, "measure norm over a finite family (lower bound)", spec, s,
                      family, opts, jobs, [&](const GridSet& K, double cap) { return mu.mass_of(K) / cap; });
  v.witness_measure = mu;
  return v;
}

nlohmann::json to_json(const FunctionalValue& v) {
  return {{"kind", to_string(v.kind)},
          {"value", v.value},
          {"label", v.label},
          {"certified", v.certified},
          {"rescale", v.rescale},
          {"flagged", v.flagged},
          {"pieces", v.pieces},
          {"dropped", v.dropped},
          {"dropped_contribution", v.dropped_contribution},
          {"skipped", v.skipped}};
}

}  // namespace captool
