#include "captool/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "captool/error.hpp"
#include "captool/parallel.hpp"

namespace captool {

namespace {

constexpr double kBaseFloor = 1e-300;

void validate_exponent(const KernelSpec& spec, double s) {
  spec.validate();
  if (!(s > 1.0) || !std::isfinite(s)) throw ConfigError("capacity exponent s must be finite and > 1");
  if (spec.alpha * s > spec.dim + 1e-12)
    throw ConfigError("capacity requires alpha > 0, s > 1 and alpha*s <= n; got alpha*s = " +
                      std::to_string(spec.alpha * s) + " > n = " + std::to_string(spec.dim));
}

// Dual of min (1/s) h^n sum f^s s.t. (K f)_i >= b_i on the constraint cells:
// maximise D(lam) = sum b lam - (1/s') h^n sum g^{s'} with g = T * lam. The
// solver minimises phi = -D by projected Newton-CG.
class Dual {
 public:
  Dual(const KernelTable& table, std::vector<std::size_t> cells, std::vector<double> b, double s)
      : table_(table),
        cells_(std::move(cells)),
        b_(std::move(b)),
        s_(s),
        sp_(s / (s - 1.0)),
        vol_(table.grid().cell_volume()),
        full_(table.grid().size()) {}

  struct State {
    std::vector<double> lam;  // on the constraint cells
    std::vector<double> g, f, V;
    double J = 0.0, B = 0.0;
    double phi() const { return J / sp - B; }
    double sp = 2.0;
  };

  std::size_t m() const noexcept { return cells_.size(); }
  double s() const noexcept { return s_; }
  double sp() const noexcept { return sp_; }
  const std::vector<double>& b() const noexcept { return b_; }
  const std::vector<std::size_t>& cells() const noexcept { return cells_; }

  void evaluate(State& st) const {
    st.sp = sp_;
    scatter(st.lam, full_);
    st.g.resize(full_.size());
    convolve_into(table_, full_, st.g);
    st.f.resize(full_.size());
    double J = 0.0;
    for (std::size_t i = 0; i < full_.size(); ++i) {
      const double gi = std::max(st.g[i] / vol_, kBaseFloor);
      st.g[i] = gi;
      st.f[i] = std::pow(gi, sp_ - 1.0);
      J += st.f[i] * gi;
    }
    st.J = J * vol_;
    st.V.resize(full_.size());
    convolve_into(table_, st.f, st.V);
    st.B = 0.0;
    for (std::size_t k = 0; k < m(); ++k) st.B += b_[k] * st.lam[k];
  }

  // Optimal multiple of lam along its ray; needs no further convolution.
  void normalise(State& st) const {
    if (st.B <= 0.0 || st.J <= 0.0) return;
    const double c = std::pow(st.B / st.J, s_ - 1.0);
    const double cf = std::pow(c, sp_ - 1.0);
    for (auto& x : st.lam) x *= c;
    for (auto& x : st.g) x *= c;
    for (auto& x : st.f) x *= cf;
    for (auto& x : st.V) x *= cf;
    st.J *= std::pow(c, sp_);
    st.B *= c;
  }

  // out = H v with H the Hessian of phi at st, restricted to `free` cells.
  void hessian(const State& st, const std::vector<double>& v, const std::vector<std::uint8_t>& free,
               std::vector<double>& out) {
    std::vector<double> vf(m());
    for (std::size_t k = 0; k < m(); ++k) vf[k] = free[k] ? v[k] : 0.0;
    scatter(vf, full_);
    work_.resize(full_.size());
    convolve_into(table_, full_, work_);
    for (std::size_t i = 0; i < full_.size(); ++i)
      full_[i] = (sp_ - 1.0) * std::pow(st.g[i], sp_ - 2.0) * work_[i] / vol_;
    convolve_into(table_, full_, work_);
    out.resize(m());
    for (std::size_t k = 0; k < m(); ++k) out[k] = free[k] ? work_[cells_[k]] : 0.0;
  }

 private:
  void scatter(const std::vector<double>& lam, std::vector<double>& full) const {
    std::fill(full.begin(), full.end(), 0.0);
    for (std::size_t k = 0; k < m(); ++k) full[cells_[k]] = lam[k];
  }

  const KernelTable& table_;
  std::vector<std::size_t> cells_;
  std::vector<double> b_;
  double s_, sp_, vol_;
  mutable std::vector<double> full_;
  std::vector<double> work_;
};

double min_ratio(const Dual& dual, const Dual::State& st) {
  double rho = INFINITY;
  for (std::size_t k = 0; k < dual.m(); ++k) rho = std::min(rho, st.V[dual.cells()[k]] / dual.b()[k]);
  return rho;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

CapacityResult empty_result(const Grid& grid) {
  CapacityResult r;
  r.f_star = Field(grid);
  r.mu_star = Field(grid);
  r.V = Field(grid);
  return r;
}

}  // namespace

void CapacityProblem::validate() const {
  validate_exponent(spec, s);
  if (spec.dim != grid().dim()) throw ConfigError("kernel dim does not match the grid of the set");
}

CapacityResult solve_dominating_density(const KernelSpec& spec, const Field& rhs, double s,
                                        const SolverOptions& opts) {
  validate_exponent(spec, s);
  if (!rhs.nonneg()) throw ConfigError("right-hand side must be nonnegative");
  if (!(opts.tol > 0.0 && opts.tol < 1.0)) throw ConfigError("solver tol must lie in (0, 1)");
  const Grid& grid = rhs.grid();
  if (spec.dim != grid.dim()) throw ConfigError("kernel dim does not match the grid");

  std::vector<std::size_t> cells;
  std::vector<double> b;
  for (std::size_t i = 0; i < rhs.size(); ++i)
    if (rhs[i] > 0.0) {
      cells.push_back(i);
      b.push_back(rhs[i]);
    }
  if (cells.empty()) return empty_result(grid);

  auto table = shared_table(spec, grid);
  Dual dual(*table, cells, b, s);
  const std::size_t m = dual.m();

  Dual::State st;
  st.lam = b;
  dual.evaluate(st);
  dual.normalise(st);

  int it = 0, cg_total = 0;
  double gap = 1.0;
  std::vector<double> grad(m), d(m), r(m), p(m), hp(m), z(m);
  std::vector<std::uint8_t> free(m);
  for (;; ++it) {
    const double rho = min_ratio(dual, st);
    gap = std::max(0.0, 1.0 - std::pow(rho, s));
    if (gap <= opts.tol) break;
    if (it >= opts.max_iters)
      throw ConvergenceError("capacity solve did not reach gap " + std::to_string(opts.tol) + " in " +
                                 std::to_string(opts.max_iters) + " iterations (last gap " +
                                 std::to_string(gap) + ")",
                             gap, it);

    double lam_max = 0.0, pg = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      grad[k] = st.V[cells[k]] - b[k];
      lam_max = std::max(lam_max, st.lam[k]);
    }
    for (std::size_t k = 0; k < m; ++k)
      pg = std::max(pg, std::fabs(std::min(st.lam[k] / lam_max, grad[k] / b[k])));
    const double eps = std::min(0.1, pg) * lam_max;
    for (std::size_t k = 0; k < m; ++k) free[k] = !(st.lam[k] <= eps && grad[k] > 0.0);

    // Truncated CG on the free block.
    std::fill(d.begin(), d.end(), 0.0);
    double gnorm2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      r[k] = free[k] ? -grad[k] : 0.0;
      gnorm2 += r[k] * r[k];
    }
    p = r;
    double rr = gnorm2;
    const double eta = std::min(0.1, std::sqrt(std::sqrt(gnorm2 / dot(b, b))));
    for (int j = 0; j < opts.max_cg && rr > eta * eta * gnorm2; ++j) {
      dual.hessian(st, p, free, hp);
      ++cg_total;
      const double php = dot(p, hp);
      if (!(php > 0.0)) break;
      const double a = rr / php;
      for (std::size_t k = 0; k < m; ++k) {
        d[k] += a * p[k];
        r[k] -= a * hp[k];
      }
      const double rr_new = dot(r, r);
      for (std::size_t k = 0; k < m; ++k) p[k] = r[k] + (rr_new / rr) * p[k];
      rr = rr_new;
    }
    if (dot(d, d) == 0.0)
      for (std::size_t k = 0; k < m; ++k) d[k] = free[k] ? -grad[k] : 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (!free[k]) d[k] = -st.lam[k];

    // Armijo search along the projected arc.
    const double phi0 = st.phi();
    Dual::State trial;
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      trial.lam.resize(m);
      double decrease = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        trial.lam[k] = std::max(0.0, st.lam[k] + t * d[k]);
        decrease += grad[k] * (trial.lam[k] - st.lam[k]);
      }
      dual.evaluate(trial);
      if (trial.B > 0.0 && trial.phi() <= phi0 + 1e-4 * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw ConvergenceError("capacity line search stalled (gap " + std::to_string(gap) + ")", gap, it);
    st = std::move(trial);
    dual.normalise(st);
  }

  const double rho = min_ratio(dual, st);
  const Grid& g = grid;
  CapacityResult res;
  std::vector<double> fs(st.f.size()), mu(g.size(), 0.0);
  for (std::size_t i = 0; i < fs.size(); ++i) fs[i] = st.f[i] / rho;
  for (std::size_t k = 0; k < m; ++k) mu[cells[k]] = st.lam[k];
  res.dual_value = st.J;
  res.value = st.J / std::pow(rho, s);
  res.gap = (res.value - res.dual_value) / res.value;
  res.f_star = Field(g, std::move(fs), true);
  res.mu_star = Field(g, std::move(mu), true);
  res.V = Field(g, st.V, true);
  res.iterations = it;
  res.cg_iterations = cg_total;
  return res;
}

CapacityResult capacity(const CapacityProblem& problem, const SolverOptions& opts) {
  problem.validate();
  return solve_dominating_density(problem.spec, problem.set.indicator(), problem.s, opts);
}

Field nonlinear_potential(const KernelTable& table, const Field& masses, double s) {
  const Grid& grid = table.grid();
  if (!(masses.grid() == grid)) throw GridMismatch("nonlinear_potential: grid differs from table grid");
  const double sp = s / (s - 1.0);
  std::vector<double> g(grid.size()), v(grid.size());
  convolve_into(table, masses.values(), g);
  for (auto& x : g) x = std::pow(std::max(x / grid.cell_volume(), kBaseFloor), sp - 1.0);
  convolve_into(table, g, v);
  for (auto& x : v) x = std::max(x, 0.0);
  return Field(grid, std::move(v), true);
}

CapacitaryMeasure capacitary_measure(const CapacityProblem& problem, const SolverOptions& opts) {
  CapacitaryMeasure out;
  out.result = capacity(problem, opts);
  if (problem.set.empty()) return out;
  const auto& res = out.result;
  auto table = shared_table(problem.spec, problem.grid());
  const double sp = problem.s / (problem.s - 1.0);
  const double vol = problem.grid().cell_volume();

  double mass = 0.0, vdmu = 0.0;
  for (std::size_t i = 0; i < res.mu_star.size(); ++i) {
    mass += res.mu_star[i];
    vdmu += res.V[i] * res.mu_star[i];
  }
  std::vector<double> g(res.mu_star.size());
  convolve_into(*table, res.mu_star.values(), g);
  double energy = 0.0;
  for (auto x : g) energy += std::pow(std::max(x / vol, kBaseFloor), sp);
  energy *= vol;
  out.identities = {mass / res.value, vdmu / res.value, energy / res.value};
  double vmin = INFINITY;
  for (auto i : problem.set.indices()) vmin = std::min(vmin, res.V[i]);
  out.min_potential_on_set = vmin;
  return out;
}

// ---------------------------------------------------------------- cache

namespace {

std::string cache_key(const CapacityProblem& p, const SolverOptions& o) {
  std::ostringstream os;
  os << std::hexfloat << to_string(p.spec.kind) << ':' << p.spec.alpha << ':' << p.grid().dim() << ':'
     << p.grid().n() << ':' << p.grid().half_extent() << ':' << p.s << ':' << o.tol << ':' << o.max_iters
     << ':' << std::hex << p.set.hash() << ':' << std::dec << p.set.count();
  return os.str();
}

std::optional<std::filesystem::path> disk_path(const std::string& key) {
  const char* dir = std::getenv("CAPTOOL_CACHE_DIR");
  if (!dir || !*dir) return std::nullopt;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : key) h = (h ^ c) * 1099511628211ull;
  std::ostringstream name;
  name << "cap-" << std::hex << h << ".json";
  return std::filesystem::path(dir) / name.str();
}

std::optional<CapacityScalars> disk_load(const std::string& key) {
  auto path = disk_path(key);
  if (!path) return std::nullopt;
  std::ifstream in(*path);
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(in);
    if (j.at("key").get<std::string>() != key) return std::nullopt;
    return CapacityScalars{j.at("value").get<double>(), j.at("gap").get<double>(), j.at("iterations").get<int>()};
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void disk_store(const std::string& key, const CapacityScalars& v) {
  auto path = disk_path(key);
  if (!path) return;
  std::error_code ec;
  std::filesystem::create_directories(path->parent_path(), ec);
  auto tmp = *path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) return;
    nlohmann::json j{{"key", key}, {"value", v.value}, {"gap", v.gap}, {"iterations", v.iterations}};
    out << j.dump();
  }
  std::filesystem::rename(tmp, *path, ec);
}

}  // namespace

CapacityScalars CapacityCache::get(const CapacityProblem& problem, const SolverOptions& opts) {
  problem.validate();
  if (problem.set.empty()) return {};
  const std::string key = cache_key(problem, opts);
  std::promise<CapacityScalars> promise;
  std::shared_future<CapacityScalars> existing;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end())
      existing = it->second;
    else
      entries_.emplace(key, promise.get_future().share());
  }
  if (existing.valid()) return existing.get();
  try {
    CapacityScalars v;
    if (auto hit = disk_load(key)) {
      v = *hit;
    } else {
      const auto r = capacity(problem, opts);
      v = {r.value, r.gap, r.iterations};
      disk_store(key, v);
      std::lock_guard lock(mutex_);
      ++solves_;
    }
    promise.set_value(v);
    return v;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    entries_.erase(key);
    throw;
  }
}

void CapacityCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
  solves_ = 0;
}

std::size_t CapacityCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t CapacityCache::solves() const {
  std::lock_guard lock(mutex_);
  return solves_;
}

CapacityCache& global_capacity_cache() {
  static CapacityCache cache;
  return cache;
}

double capacity_value(const CapacityProblem& problem, const SolverOptions& opts) {
  return global_capacity_cache().get(problem, opts).value;
}

// ---------------------------------------------------------------- quasi-additivity

QuasiAdditivity quasi_additivity_ratio(const CapacityProblem& problem, const BallCover& cover,
                                       const SolverOptions& opts, int jobs) {
  QuasiAdditivity q;
  q.multiplicity = cover.multiplicity;
  q.neighbour_bound = cover.neighbour_bound;
  q.capacity = capacity_value(problem, opts);
  if (!(q.capacity > 0.0)) throw ConfigError("quasi-additivity needs Cap(E) > 0");
  std::vector<GridSet> pieces;
  for (std::size_t j = 0; j < cover.balls.size(); ++j) {
    auto piece = problem.set.intersect(cover.balls[j]);
    if (piece.empty()) continue;
    q.balls.push_back(j);
    pieces.push_back(std::move(piece));
  }
  q.pieces.assign(pieces.size(), 0.0);
  parallel_for(pieces.size(), jobs, [&](std::size_t k) {
    CapacityProblem sub{problem.spec, pieces[k], problem.s};
    try {
      q.pieces[k] = capacity_value(sub, opts);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("ball " + std::to_string(q.balls[k]) + ": " + e.what(), e.last_gap(), e.iterations());
    }
  });
  double sum = 0.0;
  for (double v : q.pieces) sum += v;
  q.ratio = sum / q.capacity;
  return q;
}

nlohmann::json to_json(const CapacityResult& r) {
  return {{"value", r.value},         {"dual_value", r.dual_value}, {"gap", r.gap},
          {"iterations", r.iterations}, {"cg_iterations", r.cg_iterations}};
}

}  // namespace captool
