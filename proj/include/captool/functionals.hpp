#pragma once

// Functionals comparable to the Choquet integral: gamma (a convex program),
// beta (via a constructive dyadic witness), the KV objective, a lambda
// surrogate, and the multiplier and measure norms over finite set families.

#include <optional>
#include <string>
#include <vector>

#include "captool/capacity.hpp"
#include "captool/choquet.hpp"

namespace captool {

enum class FunctionalKind { Gamma, Beta, LambdaUpper, KvUpper, Multiplier, MeasureNorm };

std::string to_string(FunctionalKind k);

struct FunctionalValue {
  FunctionalKind kind = FunctionalKind::Gamma;
  double value = 0.0;
  std::optional<Field> witness;
  std::optional<AtomicMeasure> witness_measure;
  /// True only when a duality gap certifies near-optimality.
  bool certified = false;
  std::string label;
  double rescale = 1.0;  ///< witness rescale constant c >= 1
  bool flagged = false;  ///< rescale constant above the quality ceiling
  std::size_t pieces = 0;
  std::size_t dropped = 0;
  double dropped_contribution = 0.0;  ///< sum of 2^k Cap(E_{j,k}) over dropped pieces
  std::size_t skipped = 0;            ///< family members with Cap <= tol
};

/// inf of integral f^s over f >= 0 with G*f >= |u|^{1/s} at every grid point.
FunctionalValue gamma_functional(const Field& u, const KernelSpec& spec, double s, const SolverOptions& opts = {});

/// integral f^s (G*f)^{1-s}, cells with f = 0 contributing 0. Throws
/// FeasibilityError unless G*f >= |u| (1 - rel_slack) at every grid point.
double beta_value(const Field& u, const Field& f, const KernelSpec& spec, double s, double rel_slack = 1e-9);

/// The objective of beta_value without the constraint check.
double beta_objective(const Field& f, const KernelTable& table, double s);

struct WitnessOptions {
  ChoquetConfig levels;
  double max_rescale = 100.0;
  /// Projected-gradient polish steps on the witness; each accepted step lowers the bound.
  int polish_iters = 0;
  int jobs = 1;
};

/// Bands E_k = {2^{k-1} < u <= 2^k} for k in (k_min, k_max], pieces
/// E_{j,k} = E_k cap B^j over the unit-ball cover, F = max 2^k F_{j,k} with
/// F_{j,k} = f_{j,k} (G*f_{j,k})^{s-1} and f_{j,k} = (G*mu^{E_{j,k}})^{s'-1}.
/// The witness is cF with the least c >= 1 making G*(cF) >= u.
FunctionalValue beta_witness_from_choquet(const Field& u, const KernelSpec& spec, double s,
                                          const WitnessOptions& opts);

/// min of the KV objective over h = |f| and ball-mollified |f| at radii
/// h, 2h, 4h, each scaled up to dominate |f|.
FunctionalValue kv_upper(const Field& f, const KernelSpec& spec, double s);

/// The beta witness value, reported as an upper surrogate for lambda.
FunctionalValue lambda_upper(const Field& u, const KernelSpec& spec, double s, const WitnessOptions& opts);

/// Dyadic sub-boxes with >= 4 cells per axis plus superlevel sets of |f| at
/// powers of two.
std::vector<GridSet> default_family(const Field& f);
std::vector<GridSet> dyadic_boxes(const Grid& grid, int min_cells = 4);

/// max over the family of (integral_K |f|^p / Cap(K))^{1/p}.
FunctionalValue multiplier_norm(const Field& f, double p, const KernelSpec& spec, double s,
                                const std::vector<GridSet>& family, const SolverOptions& opts = {}, int jobs = 1);

/// max over the family of mu(K) / Cap(K).
FunctionalValue measure_norm(const AtomicMeasure& mu, const Grid& grid, const KernelSpec& spec, double s,
                             const std::vector<GridSet>& family, const SolverOptions& opts = {}, int jobs = 1);

nlohmann::json to_json(const FunctionalValue& v);

}  // namespace captool
