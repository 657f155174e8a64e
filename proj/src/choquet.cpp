#include "captool/choquet.hpp"

#include <cmath>

#include "captool/error.hpp"
#include "captool/parallel.hpp"

namespace captool {

void ChoquetConfig::validate() const {
  if (k_min >= k_max) throw ConfigError("choquet levels need k_min < k_max");
  if (subdivisions < 1) throw ConfigError("choquet subdivisions must be >= 1");
  if (!(solver.tol > 0.0 && solver.tol < 1.0)) throw ConfigError("per-level tol must lie in (0, 1)");
}

std::vector<double> ChoquetConfig::levels() const {
  std::vector<double> t;
  for (int j = k_min * subdivisions; j <= k_max * subdivisions; ++j)
    t.push_back(std::exp2(static_cast<double>(j) / subdivisions));
  return t;
}

ChoquetConfig adaptive_levels(const Field& w, int octaves, int subdivisions, SolverOptions solver) {
  ChoquetConfig cfg;
  cfg.subdivisions = subdivisions;
  cfg.solver = solver;
  const double top = w.size() ? w.max() : 0.0;
  cfg.k_max = top > 0.0 ? static_cast<int>(std::ceil(std::log2(top))) : 0;
  cfg.k_min = cfg.k_max - octaves;
  return cfg;
}

namespace {

double level_capacity(const GridSet& set, const KernelSpec& spec, double s, const SolverOptions& opts) {
  if (set.empty()) return 0.0;
  return capacity_value({spec, set, s}, opts);
}

}  // namespace

ChoquetResult choquet_integral(const Field& w, const KernelSpec& spec, double s, const ChoquetConfig& cfg) {
  cfg.validate();
  if (!w.nonneg()) throw ConfigError("choquet_integral needs a nonnegative field");
  ChoquetResult res;
  const auto t = cfg.levels();
  res.per_level.resize(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) res.per_level[j].t = t[j];
  const double top = w.max();
  if (top <= 0.0) return res;

  // Jobs 0 .. 2L-1 are closed/open level sets; job 2L is the support.
  const std::size_t L = t.size();
  std::vector<double> caps(2 * L + 1, 0.0);
  parallel_for(caps.size(), cfg.jobs, [&](std::size_t k) {
    GridSet set = k == 2 * L ? superlevel_set(w, 0.0)
                  : k % 2 == 0 ? closed_superlevel_set(w, t[k / 2])
                               : superlevel_set(w, t[k / 2]);
    try {
      caps[k] = level_capacity(set, spec, s, cfg.solver);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("level " + std::to_string(k / 2) + ": " + e.what(), e.last_gap(), e.iterations());
    }
  });
  for (std::size_t j = 0; j < L; ++j) {
    res.per_level[j].cap_closed = caps[2 * j];
    res.per_level[j].cap_open = caps[2 * j + 1];
  }
  res.cap_support = caps[2 * L];

  double lower = 0.0, upper = t[0] * res.cap_support;
  for (std::size_t j = 0; j < L; ++j) {
    const double width = j == 0 ? t[0] : t[j] - t[j - 1];
    lower += width * res.per_level[j].cap_closed;
    if (j > 0) upper += width * res.per_level[j - 1].cap_open;
  }
  if (top > t.back()) upper += (top - t.back()) * res.per_level.back().cap_open;
  res.lower = lower;
  res.upper = upper;
  res.value = lower;
  return res;
}

ChoquetResult choquet_of_power(const Field& w, double q, const KernelSpec& spec, double s,
                               const ChoquetConfig& cfg) {
  if (!(q > 0.0)) throw ConfigError("choquet_of_power needs q > 0");
  if (!w.nonneg()) throw ConfigError("choquet_of_power needs a nonnegative field");
  return choquet_integral(q == 1.0 ? w : pow(w, q), spec, s, cfg);
}

nlohmann::json to_json(const ChoquetResult& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : r.per_level) levels.push_back({{"t", l.t}, {"cap_closed", l.cap_closed}, {"cap_open", l.cap_open}});
  return {{"value", r.value}, {"lower", r.lower}, {"upper", r.upper}, {"cap_support", r.cap_support}, {"levels", levels}};
}

}  // namespace captool
