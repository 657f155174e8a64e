#pragma once

// (alpha, s)-capacities of grid sets as convex programs over nonnegative
// densities, with the extremal measure and its nonlinear potential.

#include <array>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "captool/grid.hpp"
#include "captool/kernels.hpp"

namespace captool {

struct SolverOptions {
  double tol = 1e-3;  ///< target relative duality gap
  int max_iters = 200;
  int max_cg = 400;
};

struct CapacityProblem {
  KernelSpec spec;
  GridSet set;
  double s = 2.0;

  const Grid& grid() const noexcept { return set.grid(); }
  /// Throws ConfigError: s > 1, alpha s <= n for Bessel, kernel/grid dims agree.
  void validate() const;
};

struct CapacityResult {
  double value = 0.0;       ///< integral of f_star^s, a feasible upper bound
  double dual_value = 0.0;  ///< certified lower bound
  Field f_star;
  Field mu_star;  ///< cell masses of the dual measure, zero off the constraint set
  Field V;        ///< G * ((G * mu_star)^{s'-1})
  double gap = 0.0;
  int iterations = 0;
  int cg_iterations = 0;
};

/// min integral f^s over f >= 0 with G*f >= rhs wherever rhs > 0. rhs >= 0.
/// Throws ConvergenceError if the gap target is not met within max_iters.
CapacityResult solve_dominating_density(const KernelSpec& spec, const Field& rhs, double s,
                                        const SolverOptions& opts = {});

CapacityResult capacity(const CapacityProblem& problem, const SolverOptions& opts = {});

struct CapacitaryMeasure {
  CapacityResult result;
  /// mu(E)/Cap, (integral V dmu)/Cap, (integral (G*mu)^{s'})/Cap.
  std::array<double, 3> identities{1.0, 1.0, 1.0};
  double min_potential_on_set = 1.0;
};

CapacitaryMeasure capacitary_measure(const CapacityProblem& problem, const SolverOptions& opts = {});

/// V = G * ((G * mu)^{s'-1}) for cell masses mu, recomputed from scratch.
Field nonlinear_potential(const KernelTable& table, const Field& masses, double s);

struct CapacityScalars {
  double value = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

/// Thread-safe insert-or-get cache of capacity values keyed by (mask, kernel,
/// s, tol, grid). Concurrent requests for one key solve once. When
/// CAPTOOL_CACHE_DIR is set, values also persist there as small JSON files.
class CapacityCache {
 public:
  CapacityScalars get(const CapacityProblem& problem, const SolverOptions& opts);
  void clear();
  std::size_t size() const;
  std::size_t solves() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<CapacityScalars>> entries_;
  std::size_t solves_ = 0;
};

CapacityCache& global_capacity_cache();

/// Cached capacity value.
double capacity_value(const CapacityProblem& problem, const SolverOptions& opts = {});

struct QuasiAdditivity {
  double ratio = 0.0;
  double capacity = 0.0;
  std::vector<double> pieces;  ///< Cap(E cap B^j) for the balls meeting E
  std::vector<std::size_t> balls;
  int multiplicity = 0;
  int neighbour_bound = 0;
};

/// [sum_j Cap(E cap B^j)] / Cap(E). Throws ConfigError when Cap(E) = 0; a
/// failing sub-solve is rethrown with its ball index in the message.
QuasiAdditivity quasi_additivity_ratio(const CapacityProblem& problem, const BallCover& cover,
                                       const SolverOptions& opts = {}, int jobs = 1);

nlohmann::json to_json(const CapacityResult& r);

}  // namespace captool
