#include "captool/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "captool/error.hpp"
#include "captool/functionals.hpp"
#include "captool/kernels.hpp"
#include "captool/maximal.hpp"
#include "captool/parallel.hpp"

namespace captool {

namespace {

// uniform_real_distribution is implementation-defined; draw bits directly so
// families are identical across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::size_t index, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t(index) >> 32), tag};
    engine_.seed(seq);
  }
  double uniform(double a, double b) { return a + (b - a) * static_cast<double>(engine_() >> 11) * 0x1p-53; }
  int integer(int a, int b) { return a + static_cast<int>(engine_() % static_cast<std::uint64_t>(b - a + 1)); }
  double normal() {
    const double u = 1.0 - uniform(0.0, 1.0), v = uniform(0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
  }

 private:
  std::mt19937_64 engine_;
};

struct Bump {
  Point centre{};
  double width = 0.0;
  double amplitude = 0.0;
};

struct Component {
  Point centre{};
  double radius = 0.0;
  bool box = false;
};

Field bump_field(const Grid& grid, const std::vector<Bump>& bumps) {
  const int n = grid.dim();
  return Field::sample(
      grid,
      [&](const Point& x) {
        double v = 0.0;
        for (const auto& b : bumps) v += b.amplitude * std::exp(-std::pow(distance(x, b.centre, n) / b.width, 2));
        return v;
      },
      true);
}

GridSet component_set(const Grid& grid, const std::vector<Component>& comps) {
  const int n = grid.dim();
  return GridSet::from_predicate(grid, [&](const Point& x) {
    for (const auto& c : comps) {
      if (c.box) {
        double m = 0.0;
        for (int d = 0; d < n; ++d) m = std::max(m, std::fabs(x[d] - c.centre[d]));
        if (m <= c.radius) return true;
      } else if (distance(x, c.centre, n) <= c.radius) {
        return true;
      }
    }
    return false;
  });
}

Point point_in_ball(Rng& rng, int n, double r) {
  for (;;) {
    Point p{};
    for (int d = 0; d < n; ++d) p[d] = rng.uniform(-r, r);
    if (norm(p, n) < r) return p;
  }
}

std::vector<Component> draw_components(Rng& rng, int n, int lo, int hi, double spread, double rmin, double rmax) {
  std::vector<Component> comps(static_cast<std::size_t>(rng.integer(lo, hi)));
  for (auto& c : comps) {
    for (int d = 0; d < n; ++d) c.centre[d] = rng.uniform(-spread, spread);
    c.radius = rng.uniform(rmin, rmax);
    c.box = rng.integer(0, 1) == 1;
  }
  return comps;
}

struct Context {
  const HarnessConfig& cfg;
  TestFamily family;
};

using Evaluator = std::function<SampleResult(const Grid&, std::size_t)>;

SampleResult ratio_sample(double lhs, double rhs) {
  SampleResult r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.ratio = lhs / rhs;
  return r;
}

double choquet_lower(const Field& w, const HarnessConfig& cfg) {
  if (w.max() <= 0.0) return 0.0;
  auto levels = adaptive_levels(w, cfg.octaves, cfg.subdivisions, cfg.solver);
  return choquet_integral(w, cfg.spec, cfg.s, levels).value;
}

double conjugate(double s) { return s / (s - 1.0); }

WitnessOptions witness_options(const Field& u, const HarnessConfig& cfg) {
  WitnessOptions o;
  o.levels.k_max = static_cast<int>(std::ceil(std::log2(u.max())));
  o.levels.k_min = o.levels.k_max - cfg.octaves;
  o.levels.solver = cfg.solver;
  return o;
}

/// sup over the grid of (G*f)^s / G*[f (G*f)^{s-1}], with the values at the argmax.
SampleResult pointwise_sup(const Field& f, const KernelTable& table, double s) {
  auto Gf = convolve(table, f);
  auto den = convolve(table, multiply(f, pow(Gf, s - 1.0)));
  SampleResult r;
  r.ratio = -1.0;
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(den[i] > 0.0)) throw SingularityError("vanishing denominator at a grid point");
    const double num = std::pow(Gf[i], s);
    const double q = num / den[i];
    lo = std::min(lo, q);
    if (q > r.ratio) {
      r.ratio = q;
      r.lhs = num;
      r.rhs = den[i];
    }
  }
  r.metrics["min_pointwise"] = lo;
  return r;
}

std::vector<SampleResult> run_samples(const HarnessConfig& cfg, const Grid& grid, std::size_t count,
                                      const Evaluator& ev) {
  std::vector<SampleResult> out(count);
  parallel_for(count, cfg.jobs, [&](std::size_t i) {
    SampleResult r;
    try {
      r = ev(grid, i);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      r = SampleResult{};
      r.skipped = true;
      r.note = e.what();
    }
    r.id = i;
    if (!r.skipped) {
      if (r.lhs == 0.0 && r.rhs == 0.0) {
        r.skipped = true;
        r.ratio = 0.0;
        r.note = "0/0";
      } else if (!std::isfinite(r.ratio)) {
        r.skipped = true;
        r.note = "non-finite ratio";
      }
    }
    out[i] = std::move(r);
  });
  return out;
}

void reduce_metrics(const std::vector<SampleResult>& samples, std::map<std::string, double>& extras) {
  for (const auto& r : samples) {
    if (r.skipped) continue;
    for (const auto& [k, v] : r.metrics) {
      auto it = extras.find(k);
      if (it == extras.end()) {
        extras[k] = v;
      } else if (k.size() > 6 && k.compare(k.size() - 6, 6, "_count") == 0) {
        it->second += v;
      } else if (k.rfind("min_", 0) == 0) {
        it->second = std::min(it->second, v);
      } else {
        it->second = std::max(it->second, v);
      }
    }
  }
}

double max_ratio(const std::vector<SampleResult>& samples) {
  double m = 0.0;
  for (const auto& r : samples)
    if (!r.skipped) m = std::max(m, r.ratio);
  return m;
}

InequalityReport assemble(InequalityId id, const HarnessConfig& cfg, const TestFamily& family, std::size_t count,
                          const Evaluator& ev) {
  cfg.validate();
  InequalityReport rep;
  rep.id = id;
  rep.family = family.name();
  rep.config = cfg;
  const Grid coarse = cfg.grid();
  rep.per_sample = run_samples(cfg, coarse, count, ev);
  rep.observed_constant = max_ratio(rep.per_sample);
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.per_sample) {
    if (r.skipped) ++rep.skipped;
    if (r.flagged) ++rep.flagged;
    if (!r.skipped) rep.min_ratio = std::min(rep.min_ratio, r.ratio);
  }
  if (!std::isfinite(rep.min_ratio)) rep.min_ratio = 0.0;
  reduce_metrics(rep.per_sample, rep.extras);
  if (cfg.refine) {
    const Grid fine(cfg.spec.dim, 2 * cfg.n, cfg.half_extent);
    rep.per_sample_fine = run_samples(cfg, fine, count, ev);
    for (const auto& r : rep.per_sample_fine) {
      if (r.skipped) ++rep.skipped_fine;
      if (r.flagged) ++rep.flagged;
    }
    rep.observed_constant_fine = max_ratio(rep.per_sample_fine);
    rep.refinement = *rep.observed_constant_fine / rep.observed_constant;
    std::map<std::string, double> fine_extras;
    reduce_metrics(rep.per_sample_fine, fine_extras);
    for (const auto& [k, v] : fine_extras) rep.extras["fine." + k] = v;
  }
  return rep;
}

TestFamily family_for(const HarnessConfig& cfg, FamilyKind fallback) {
  TestFamily f;
  f.kind = cfg.family.value_or(fallback);
  f.count = cfg.samples;
  f.seed = cfg.seed;
  return f;
}

KernelTablePtr table_for(const HarnessConfig& cfg, const Grid& grid) { return shared_table(cfg.spec, grid); }

void require_fields(const TestFamily& fam) {
  if (fam.kind == FamilyKind::Atoms) throw ConfigError("family 'atoms' yields measures, not fields");
}

}  // namespace

std::string to_string(InequalityId id) {
  switch (id) {
    case InequalityId::Mazya: return "mazya";
    case InequalityId::Capstrong: return "capstrong";
    case InequalityId::Gfl1c: return "gfl1c";
    case InequalityId::Thm12Band: return "thm12_band";
    case InequalityId::Lemma31Bessel: return "lemma31_bessel";
    case InequalityId::VwhRiesz: return "vwh_riesz";
    case InequalityId::Thm13Maximal: return "thm13_maximal";
    case InequalityId::QuasiAdd: return "quasi_add";
    case InequalityId::TwoSidedKernel: return "two_sided_kernel";
    case InequalityId::MvnChain: return "mvn_chain";
  }
  return "unknown";
}

InequalityId inequality_from_string(const std::string& name) {
  static const std::map<std::string, InequalityId> names{
      {"mazya", InequalityId::Mazya},
      {"capstrong", InequalityId::Capstrong},
      {"gfl1c", InequalityId::Gfl1c},
      {"thm12", InequalityId::Thm12Band},
      {"thm12_band", InequalityId::Thm12Band},
      {"lemma31", InequalityId::Lemma31Bessel},
      {"lemma31_bessel", InequalityId::Lemma31Bessel},
      {"vwh_riesz", InequalityId::VwhRiesz},
      {"thm13", InequalityId::Thm13Maximal},
      {"thm13_maximal", InequalityId::Thm13Maximal},
      {"quasiadd", InequalityId::QuasiAdd},
      {"quasi_add", InequalityId::QuasiAdd},
      {"two_sided_kernel", InequalityId::TwoSidedKernel},
      {"mvn_chain", InequalityId::MvnChain},
  };
  auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown inequality id '" + name + "'");
  return it->second;
}

std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::Bumps: return "bumps";
    case FamilyKind::FarBumps: return "far_bumps";
    case FamilyKind::Sets: return "sets";
    case FamilyKind::ScatteredSets: return "scattered_sets";
    case FamilyKind::CapacitaryDensities: return "capacitary_densities";
    case FamilyKind::Atoms: return "atoms";
  }
  return "unknown";
}

FamilyKind family_from_string(const std::string& name) {
  for (auto k : {FamilyKind::Bumps, FamilyKind::FarBumps, FamilyKind::Sets, FamilyKind::ScatteredSets,
                 FamilyKind::CapacitaryDensities, FamilyKind::Atoms})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown test family '" + name + "'");
}

Field TestFamily::field(const Grid& grid, std::size_t i, const KernelSpec& spec, double s) const {
  const int n = grid.dim();
  Rng rng(seed, i, static_cast<std::uint32_t>(kind));
  switch (kind) {
    case FamilyKind::Bumps: {
      std::vector<Bump> bumps(static_cast<std::size_t>(rng.integer(1, 5)));
      for (auto& b : bumps) {
        for (int d = 0; d < n; ++d) b.centre[d] = rng.uniform(-1.0, 1.0);
        b.width = rng.uniform(0.15, 0.6);
        b.amplitude = std::exp2(rng.integer(-2, 1));
      }
      return bump_field(grid, bumps);
    }
    case FamilyKind::FarBumps: {
      std::vector<Bump> bumps(2);
      for (std::size_t k = 0; k < 2; ++k) {
        bumps[k].centre[0] = (k == 0 ? -0.5 : 0.5) * grid.half_extent();
        bumps[k].width = rng.uniform(0.15, 0.6);
        bumps[k].amplitude = std::exp2(rng.integer(-2, 1));
      }
      return bump_field(grid, bumps);
    }
    case FamilyKind::Sets:
    case FamilyKind::ScatteredSets:
      return set(grid, i).indicator();
    case FamilyKind::CapacitaryDensities: {
      auto comps = draw_components(rng, n, 1, 3, 1.0, 0.2, 0.6);
      return capacity({spec, component_set(grid, comps), s}).f_star;
    }
    case FamilyKind::Atoms:
      break;
  }
  throw ConfigError("family '" + name() + "' does not produce fields");
}

GridSet TestFamily::set(const Grid& grid, std::size_t i) const {
  Rng rng(seed, i, static_cast<std::uint32_t>(kind));
  if (kind == FamilyKind::Sets) return component_set(grid, draw_components(rng, grid.dim(), 1, 3, 1.0, 0.2, 0.6));
  if (kind == FamilyKind::ScatteredSets)
    return component_set(grid, draw_components(rng, grid.dim(), 2, 3, 2.0, 0.1, 0.4));
  throw ConfigError("family '" + name() + "' does not produce sets");
}

AtomicMeasure TestFamily::measure(int dim, std::size_t i) const {
  if (kind != FamilyKind::Atoms) throw ConfigError("family '" + name() + "' does not produce measures");
  Rng rng(seed, i, static_cast<std::uint32_t>(kind));
  std::vector<Atom> atoms(static_cast<std::size_t>(rng.integer(1, 3)));
  for (auto& a : atoms) a.mass = rng.uniform(0.5, 2.0);
  if (atoms.size() == 1) {
    atoms[0].location = point_in_ball(rng, dim, 0.5);
  } else {
    const double diam = rng.uniform(0.2, 0.9);
    Point u{};
    double len = 0.0;
    while (len < 1e-3) {
      for (int d = 0; d < dim; ++d) u[d] = rng.normal();
      len = norm(u, dim);
    }
    for (int d = 0; d < dim; ++d) {
      atoms[0].location[d] = 0.5 * diam * u[d] / len;
      atoms[1].location[d] = -0.5 * diam * u[d] / len;
    }
    if (atoms.size() == 3) atoms[2].location = point_in_ball(rng, dim, 0.5 * diam);
  }
  return AtomicMeasure(dim, std::move(atoms));
}

void HarnessConfig::validate() const {
  std::vector<std::string> errs;
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    errs.emplace_back(e.what());
  }
  if (!(s > 1.0)) errs.emplace_back("s must exceed 1");
  if (spec.alpha > 0.0 && s > 1.0 && spec.alpha * s > spec.dim) {
    std::ostringstream os;
    os << "hypothesis alpha > 0, s > 1, alpha*s <= n violated: alpha*s = " << spec.alpha * s << " > n = " << spec.dim;
    errs.push_back(os.str());
  }
  if (n < 8) errs.emplace_back("n must be at least 8");
  if (!(half_extent > 0.0)) errs.emplace_back("half_extent must be positive");
  if (n >= 8 && half_extent > 0.0 && !(2.0 * half_extent / static_cast<double>(n) < 0.25))
    errs.emplace_back("grid spacing must be below 1/4");
  if (!(q > 0.0)) errs.emplace_back("q must be positive");
  if (!(solver.tol > 0.0 && solver.tol < 1.0)) errs.emplace_back("solver tol must lie in (0, 1)");
  if (solver.max_iters < 1) errs.emplace_back("solver max_iters must be positive");
  if (octaves < 1) errs.emplace_back("octaves must be positive");
  if (subdivisions < 1) errs.emplace_back("subdivisions must be positive");
  if (samples < 1) errs.emplace_back("samples must be positive");
  if (jobs < 1) errs.emplace_back("jobs must be positive");
  if (!(skip_budget >= 0.0 && skip_budget <= 1.0)) errs.emplace_back("skip_budget must lie in [0, 1]");
  if (!errs.empty()) {
    std::string msg = "invalid configuration: ";
    for (std::size_t k = 0; k < errs.size(); ++k) msg += (k ? "; " : "") + errs[k];
    throw ConfigError(msg);
  }
}

bool InequalityReport::all_finite() const {
  auto ok = [](const std::vector<SampleResult>& v) {
    return std::all_of(v.begin(), v.end(), [](const SampleResult& r) { return r.skipped || std::isfinite(r.ratio); });
  };
  return ok(per_sample) && ok(per_sample_fine) && std::isfinite(observed_constant) &&
         (!refinement || std::isfinite(*refinement));
}

bool InequalityReport::skip_budget_exceeded() const {
  const double budget = config.skip_budget;
  auto over = [&](std::size_t skipped, std::size_t total) {
    return total > 0 && static_cast<double>(skipped) > budget * static_cast<double>(total);
  };
  return over(skipped, per_sample.size()) || over(skipped_fine, per_sample_fine.size());
}

void enforce_skip_budget(const InequalityReport& r) {
  if (r.skip_budget_exceeded())
    throw SkipBudgetError(to_string(r.id) + ": " + std::to_string(r.skipped) + " of " +
                          std::to_string(r.per_sample.size()) + " samples skipped (" +
                          std::to_string(r.skipped_fine) + " at 2N), above the skip budget");
}

InequalityReport verify_mazya(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  return assemble(InequalityId::Mazya, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto table = table_for(cfg, grid);
    auto f = fam.field(grid, i, cfg.spec, cfg.s);
    auto r = ratio_sample(choquet_lower(pow(convolve(*table, f), cfg.s), cfg), integrate(pow(f, cfg.s)));
    auto f2 = scale(f, 2.0);
    const double r2 = choquet_lower(pow(convolve(*table, f2), cfg.s), cfg) / integrate(pow(f2, cfg.s));
    if (r.rhs > 0.0) r.metrics["scaling_deviation"] = std::fabs(r2 / r.ratio - 1.0);
    return r;
  });
}

InequalityReport verify_capstrong(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  return assemble(InequalityId::Capstrong, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto table = table_for(cfg, grid);
    auto f = fam.field(grid, i, cfg.spec, cfg.s);
    auto r = ratio_sample(choquet_lower(convolve(*table, f), cfg), beta_objective(f, *table, cfg.s));
    auto f2 = scale(f, 2.0);
    const double r2 = choquet_lower(convolve(*table, f2), cfg) / beta_objective(f2, *table, cfg.s);
    if (r.rhs > 0.0) r.metrics["scaling_deviation"] = std::fabs(r2 / r.ratio - 1.0);
    return r;
  });
}

InequalityReport verify_gfl1c(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  auto rep = assemble(InequalityId::Gfl1c, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto table = table_for(cfg, grid);
    auto f = fam.field(grid, i, cfg.spec, cfg.s);
    const double lhs = choquet_lower(convolve(*table, f), cfg);
    auto r = ratio_sample(lhs, kv_upper(f, cfg.spec, cfg.s).value);
    const double capstrong = lhs / beta_objective(f, *table, cfg.s);
    r.metrics["below_capstrong_count"] = r.ratio < capstrong * (1 - 1e-12) ? 1.0 : 0.0;
    return r;
  });
  rep.surrogate = true;
  rep.notes.push_back("right side is the KV upper bound standing in for the Koethe-dual norm");
  return rep;
}

InequalityReport verify_thm12(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  const bool indicators = fam.kind == FamilyKind::Sets || fam.kind == FamilyKind::ScatteredSets;
  auto rep = assemble(InequalityId::Thm12Band, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto table = table_for(cfg, grid);
    Field u;
    double C = 0.0;
    if (indicators) {
      auto E = fam.set(grid, i);
      u = E.indicator();
      C = capacity_value({cfg.spec, E, cfg.s}, cfg.solver);
    } else {
      u = fam.field(grid, i, cfg.spec, cfg.s);
      C = choquet_lower(u, cfg);
    }
    if (u.max() <= 0.0) return ratio_sample(0.0, 0.0);
    auto v = beta_witness_from_choquet(u, cfg.spec, cfg.s, witness_options(u, cfg));
    auto r = ratio_sample(v.value, C);
    r.flagged = v.flagged;
    r.metrics["max_rescale"] = v.rescale;
    r.metrics["dropped_count"] = static_cast<double>(v.dropped);
    const auto& w = *v.witness;
    r.metrics["capstrong_on_witness"] = choquet_lower(convolve(*table, w), cfg) / beta_objective(w, *table, cfg.s);
    return r;
  });
  rep.notes.push_back(indicators ? "band of beta(chi_E) / Cap(E) over the indicator family"
                                 : "band of the beta witness value over the Choquet integral");
  return rep;
}

InequalityReport verify_lemma31(const HarnessConfig& cfg) {
  if (cfg.spec.kind != KernelKind::Bessel) throw ConfigError("lemma31_bessel needs a Bessel kernel");
  auto fam = family_for(cfg, FamilyKind::Atoms);
  if (fam.kind != FamilyKind::Atoms) throw ConfigError("lemma31_bessel needs the atoms family");
  const double sp = conjugate(cfg.s);
  return assemble(InequalityId::Lemma31Bessel, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto table = table_for(cfg, grid);
    auto mu = fam.measure(grid.dim(), i);
    if (!(mu.support_diameter() < 1.0)) throw ConfigError("lemma31_bessel needs support diameter < 1");
    auto f = pow(convolve_measure(*table, mu), sp - 1.0);
    auto r = pointwise_sup(f, *table, cfg.s);
    auto f2 = pow(convolve_measure(*table, mu.scaled(2.0)), sp - 1.0);
    r.metrics["mass_scaling_deviation"] = std::fabs(pointwise_sup(f2, *table, cfg.s).ratio / r.ratio - 1.0);
    return r;
  });
}

InequalityReport verify_vwh_riesz(const HarnessConfig& cfg) {
  if (cfg.spec.kind != KernelKind::Riesz) throw ConfigError("vwh_riesz needs a Riesz kernel");
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  const KernelSpec bessel{KernelKind::Bessel, cfg.spec.alpha, cfg.spec.dim};
  auto rep = assemble(InequalityId::VwhRiesz, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto f = fam.field(grid, i, cfg.spec, cfg.s);
    auto r = pointwise_sup(f, *table_for(cfg, grid), cfg.s);
    r.metrics["bessel_contrast"] = pointwise_sup(f, *shared_table(bessel, grid), cfg.s).ratio;
    // Same values on the grid dilated by 2, i.e. the sample x -> f(x/2).
    const Grid wide(grid.dim(), grid.n(), 2.0 * grid.half_extent());
    Field fw(wide, std::vector<double>(f.values().begin(), f.values().end()), true);
    r.metrics["dilation_deviation"] = std::fabs(pointwise_sup(fw, *shared_table(cfg.spec, wide), cfg.s).ratio / r.ratio - 1.0);
    return r;
  });
  rep.notes.push_back("Riesz potentials are computed on the truncated domain; global claims hold up to truncation");
  return rep;
}

InequalityReport verify_thm13(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  auto rep = assemble(InequalityId::Thm13Maximal, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto f = fam.field(grid, i, cfg.spec, cfg.s);
    auto M = local_maximal(f, RadiusSet::automatic(grid));
    return ratio_sample(choquet_lower(pow(M, cfg.q), cfg), choquet_lower(pow(f, cfg.q), cfg));
  });
  const double threshold = (cfg.spec.dim - cfg.spec.alpha) / cfg.spec.dim;
  rep.exploratory = !(cfg.q > threshold);
  rep.extras["q_threshold"] = threshold;
  rep.notes.push_back("maximal boundary policy: clipped-ball averaging normalised by the clipped cell count");
  if (rep.exploratory) rep.notes.push_back("q at or below (n - alpha)/n: exploratory run, no bounded constant claimed");
  return rep;
}

InequalityReport verify_quasiadd(const HarnessConfig& cfg) {
  auto fam = family_for(cfg, FamilyKind::ScatteredSets);
  if (fam.kind != FamilyKind::Sets && fam.kind != FamilyKind::ScatteredSets)
    throw ConfigError("quasi_add needs a set family");
  auto rep = assemble(InequalityId::QuasiAdd, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    const CapacityProblem problem{cfg.spec, fam.set(grid, i), cfg.s};
    auto qa = quasi_additivity_ratio(problem, unit_ball_cover(grid), cfg.solver, 1);
    double sum = 0.0;
    for (double p : qa.pieces) sum += p;
    auto r = ratio_sample(sum, qa.capacity);
    r.metrics["multiplicity"] = qa.multiplicity;
    r.metrics["neighbour_bound"] = qa.neighbour_bound;
    r.metrics["balls"] = static_cast<double>(qa.balls.size());
    return r;
  });
  return rep;
}

InequalityReport verify_two_sided_kernel(const HarnessConfig& cfg) {
  if (cfg.spec.kind != KernelKind::Bessel) throw ConfigError("two_sided_kernel needs a Bessel kernel");
  if (cfg.half_extent < 4.0) throw ConfigError("two_sided_kernel needs half_extent >= 4");
  TestFamily fam = family_for(cfg, FamilyKind::Bumps);
  auto rep = assemble(InequalityId::TwoSidedKernel, cfg, fam, 2, [&](const Grid& grid, std::size_t i) {
    auto c = check_two_sided(cfg.spec, grid);
    auto r = ratio_sample(i == 0 ? c.near_origin : c.shift, 1.0);
    r.note = i == 0 ? "near_origin" : "shift";
    r.metrics[i == 0 ? "near_samples" : "shift_samples"] =
        static_cast<double>(i == 0 ? c.near_samples : c.shift_samples);
    return r;
  });
  rep.family = "kernel_offsets";
  return rep;
}

InequalityReport verify_mvn_chain(const HarnessConfig& cfg) {
  const auto fam = family_for(cfg, FamilyKind::Bumps);
  require_fields(fam);
  auto rep = assemble(InequalityId::MvnChain, cfg, fam, cfg.samples, [&](const Grid& grid, std::size_t i) {
    auto u = fam.field(grid, i, cfg.spec, cfg.s);
    if (u.max() <= 0.0) return ratio_sample(0.0, 0.0);
    auto v = beta_witness_from_choquet(u, cfg.spec, cfg.s, witness_options(u, cfg));
    const double K = kv_upper(*v.witness, cfg.spec, cfg.s).value;
    auto r = ratio_sample(choquet_lower(u, cfg), K);
    r.flagged = v.flagged;
    r.metrics["kv_above_beta_count"] = K > v.value * (1 + 1e-12) ? 1.0 : 0.0;
    r.metrics["max_rescale"] = v.rescale;
    return r;
  });
  rep.surrogate = true;
  rep.notes.push_back("Choquet(u) over the KV bound of the beta witness; KV stands in for the Koethe-dual norm");
  return rep;
}

InequalityReport verify(InequalityId id, const HarnessConfig& cfg) {
  switch (id) {
    case InequalityId::Mazya: return verify_mazya(cfg);
    case InequalityId::Capstrong: return verify_capstrong(cfg);
    case InequalityId::Gfl1c: return verify_gfl1c(cfg);
    case InequalityId::Thm12Band: return verify_thm12(cfg);
    case InequalityId::Lemma31Bessel: return verify_lemma31(cfg);
    case InequalityId::VwhRiesz: return verify_vwh_riesz(cfg);
    case InequalityId::Thm13Maximal: return verify_thm13(cfg);
    case InequalityId::QuasiAdd: return verify_quasiadd(cfg);
    case InequalityId::TwoSidedKernel: return verify_two_sided_kernel(cfg);
    case InequalityId::MvnChain: return verify_mvn_chain(cfg);
  }
  throw ConfigError("unknown inequality id");
}

nlohmann::json to_json(const HarnessConfig& cfg) {
  nlohmann::json j;
  j["kernel"] = to_json(cfg.spec);
  j["grid"] = {{"n", cfg.n}, {"half_extent", cfg.half_extent}};
  j["s"] = cfg.s;
  j["q"] = cfg.q;
  j["solver"] = {{"tol", cfg.solver.tol}, {"max_iters", cfg.solver.max_iters}, {"max_cg", cfg.solver.max_cg}};
  j["levels"] = {{"octaves", cfg.octaves}, {"subdivisions", cfg.subdivisions}};
  j["samples"] = cfg.samples;
  j["seed"] = cfg.seed;
  j["refine"] = cfg.refine;
  j["skip_budget"] = cfg.skip_budget;
  j["family"] = cfg.family ? nlohmann::json(to_string(*cfg.family)) : nlohmann::json(nullptr);
  return j;
}

namespace {

nlohmann::json samples_json(const std::vector<SampleResult>& v) {
  auto a = nlohmann::json::array();
  for (const auto& r : v) {
    nlohmann::json j{{"id", r.id}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"ratio", r.ratio}};
    if (r.skipped) j["skipped"] = true;
    if (r.flagged) j["flagged"] = true;
    if (!r.note.empty()) j["note"] = r.note;
    a.push_back(std::move(j));
  }
  return a;
}

}  // namespace

nlohmann::json to_json(const InequalityReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["inequality_id"] = to_string(r.id);
  j["family"] = r.family;
  j["params"] = {{"dim", r.config.spec.dim}, {"alpha", r.config.spec.alpha}, {"kernel", to_string(r.config.spec.kind)},
                 {"s", r.config.s},         {"q", r.config.q},               {"tol", r.config.solver.tol},
                 {"n", r.config.n}};
  j["config"] = to_json(r.config);
  j["observed_constant"] = r.observed_constant;
  j["min_ratio"] = r.min_ratio;
  if (r.refinement) {
    j["refinement"] = {{"n", r.config.n},
                       {"n_fine", 2 * r.config.n},
                       {"observed_constant_fine", *r.observed_constant_fine},
                       {"ratio", *r.refinement}};
  } else {
    j["refinement"] = nullptr;
  }
  j["skipped"] = r.skipped;
  j["skipped_fine"] = r.skipped_fine;
  j["flagged"] = r.flagged;
  j["surrogate"] = r.surrogate;
  j["exploratory"] = r.exploratory;
  j["extras"] = r.extras;
  j["notes"] = r.notes;
  j["per_sample"] = samples_json(r.per_sample);
  j["per_sample_fine"] = samples_json(r.per_sample_fine);
  return j;
}

std::string to_csv(const InequalityReport& r) {
  std::string out = "grid_n,id,lhs,rhs,ratio,skipped,flagged\n";
  char buf[256];
  auto rows = [&](const std::vector<SampleResult>& v, std::int64_t n) {
    for (const auto& s : v) {
      std::snprintf(buf, sizeof buf, "%lld,%zu,%.17g,%.17g,%.17g,%d,%d\n", static_cast<long long>(n), s.id, s.lhs,
                    s.rhs, s.ratio, s.skipped ? 1 : 0, s.flagged ? 1 : 0);
      out += buf;
    }
  };
  rows(r.per_sample, r.config.n);
  rows(r.per_sample_fine, 2 * r.config.n);
  return out;
}

std::string ratio_histogram(const InequalityReport& r, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<double> logs;
  for (const auto& s : r.per_sample)
    if (!s.skipped && s.ratio > 0.0) logs.push_back(std::log10(s.ratio));
  std::string out = "# log10(ratio) count\n";
  if (logs.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
  const double lo = *lo_it, width = std::max((*hi_it - lo) / bins, 1e-12);
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double x : logs) ++counts[std::min<std::size_t>(static_cast<std::size_t>((x - lo) / width), bins - 1)];
  char buf[128];
  for (int b = 0; b < bins; ++b) {
    std::snprintf(buf, sizeof buf, "%.9g %d\n", lo + (b + 0.5) * width, counts[static_cast<std::size_t>(b)]);
    out += buf;
  }
  return out;
}

}  // namespace captool
