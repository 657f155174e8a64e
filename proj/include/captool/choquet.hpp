#pragma once

// Layer-cake quadrature of integrals against Cap_{alpha,s} over dyadic
// (optionally sub-dyadic) levels.

#include <vector>

#include "captool/capacity.hpp"

namespace captool {

struct ChoquetConfig {
  int k_min = -12;
  int k_max = 6;
  /// Levels per octave: t_j = 2^{j / subdivisions}.
  int subdivisions = 1;
  SolverOptions solver;
  int jobs = 1;

  void validate() const;
  std::vector<double> levels() const;
};

/// Levels spanning `octaves` below the first power of two >= max w.
ChoquetConfig adaptive_levels(const Field& w, int octaves, int subdivisions = 1, SolverOptions solver = {});

struct ChoquetLevel {
  double t = 0.0;
  double cap_closed = 0.0;  ///< Cap({w >= t})
  double cap_open = 0.0;    ///< Cap({w > t})
};

struct ChoquetResult {
  double value = 0.0;  ///< the lower sum
  double lower = 0.0;
  double upper = 0.0;
  double cap_support = 0.0;  ///< Cap({w > 0})
  std::vector<ChoquetLevel> per_level;
};

/// phi(t) = Cap({w > t}) is non-increasing, so on (t_{j-1}, t_j] it lies
/// between Cap({w >= t_j}) and Cap({w > t_{j-1}}). The lower sum uses the
/// former (with t_0 = 0), the upper sum the latter plus the tail
/// (max w - t_last) Cap({w > t_last}) above the last level.
ChoquetResult choquet_integral(const Field& w, const KernelSpec& spec, double s, const ChoquetConfig& cfg);

/// choquet_integral of w^q.
ChoquetResult choquet_of_power(const Field& w, double q, const KernelSpec& spec, double s,
                               const ChoquetConfig& cfg);

nlohmann::json to_json(const ChoquetResult& r);

}  // namespace captool
