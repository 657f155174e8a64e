#pragma once

// Seeded test families and the verification harness: both sides of each
// inequality per sample, observed constants, and N vs 2N refinement.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "captool/capacity.hpp"
#include "captool/choquet.hpp"

namespace captool {

inline constexpr int kReportSchemaVersion = 1;

enum class InequalityId {
  Mazya,
  Capstrong,
  Gfl1c,
  Thm12Band,
  Lemma31Bessel,
  VwhRiesz,
  Thm13Maximal,
  QuasiAdd,
  TwoSidedKernel,
  MvnChain,
};

std::string to_string(InequalityId id);
/// Accepts the report ids and the short CLI names (thm12, lemma31, thm13, quasiadd).
InequalityId inequality_from_string(const std::string& name);

enum class FamilyKind { Bumps, FarBumps, Sets, ScatteredSets, CapacitaryDensities, Atoms };

std::string to_string(FamilyKind k);
FamilyKind family_from_string(const std::string& name);

/// Sample i depends only on (seed, i), never on the grid it is sampled onto,
/// so the same family can be compared at N and 2N.
struct TestFamily {
  FamilyKind kind = FamilyKind::Bumps;
  std::size_t count = 50;
  std::uint64_t seed = 1;

  std::string name() const { return to_string(kind); }
  /// Bumps, FarBumps, CapacitaryDensities; Sets and ScatteredSets as indicators.
  Field field(const Grid& grid, std::size_t i, const KernelSpec& spec, double s) const;
  /// Sets and ScatteredSets.
  GridSet set(const Grid& grid, std::size_t i) const;
  /// Atoms: 1-3 atoms inside B_{1/2}; with two or more, the support diameter is drawn in (0.2, 0.9).
  AtomicMeasure measure(int dim, std::size_t i) const;
};

struct SampleResult {
  std::size_t id = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool skipped = false;
  bool flagged = false;
  std::string note;
  /// Reduced over samples: keys ending in "_count" are summed, keys starting
  /// with "min_" minimised, the rest maximised.
  std::map<std::string, double> metrics;
};

struct HarnessConfig {
  KernelSpec spec{KernelKind::Bessel, 0.5, 1};
  std::int64_t n = 256;
  double half_extent = 4.0;
  double s = 2.0;
  double q = 1.0;
  SolverOptions solver;
  int octaves = 12;
  int subdivisions = 4;
  std::size_t samples = 50;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool refine = true;
  double skip_budget = 0.1;
  std::optional<FamilyKind> family;

  Grid grid() const { return Grid(spec.dim, n, half_extent); }
  /// Throws ConfigError listing every violated precondition.
  void validate() const;
};

struct InequalityReport {
  InequalityId id = InequalityId::Mazya;
  std::string family;
  HarnessConfig config;
  std::vector<SampleResult> per_sample;
  std::vector<SampleResult> per_sample_fine;  ///< same family at 2N
  double observed_constant = 0.0;             ///< max ratio
  double min_ratio = 0.0;
  std::optional<double> observed_constant_fine;
  std::optional<double> refinement;  ///< observed constant at 2N over that at N
  std::size_t skipped = 0;
  std::size_t skipped_fine = 0;
  std::size_t flagged = 0;
  bool surrogate = false;
  bool exploratory = false;
  std::map<std::string, double> extras;
  std::vector<std::string> notes;

  bool all_finite() const;
  bool skip_budget_exceeded() const;
};

InequalityReport verify_mazya(const HarnessConfig& cfg);
InequalityReport verify_capstrong(const HarnessConfig& cfg);
InequalityReport verify_gfl1c(const HarnessConfig& cfg);
InequalityReport verify_thm12(const HarnessConfig& cfg);
InequalityReport verify_lemma31(const HarnessConfig& cfg);
InequalityReport verify_vwh_riesz(const HarnessConfig& cfg);
InequalityReport verify_thm13(const HarnessConfig& cfg);
InequalityReport verify_quasiadd(const HarnessConfig& cfg);
InequalityReport verify_two_sided_kernel(const HarnessConfig& cfg);
InequalityReport verify_mvn_chain(const HarnessConfig& cfg);

InequalityReport verify(InequalityId id, const HarnessConfig& cfg);

/// Throws SkipBudgetError when more than cfg.skip_budget of either grid's samples were skipped.
void enforce_skip_budget(const InequalityReport& r);

nlohmann::json to_json(const HarnessConfig& cfg);
nlohmann::json to_json(const InequalityReport& r);
/// One row per sample: grid,id,lhs,rhs,ratio,skipped,flagged.
std::string to_csv(const InequalityReport& r);
/// gnuplot-ready "bin_centre count" rows of log10(ratio) over non-skipped coarse samples.
std::string ratio_histogram(const InequalityReport& r, int bins = 20);

}  // namespace captool
