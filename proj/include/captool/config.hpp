#pragma once

// Experiment configuration and the runner behind the captool CLI.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "captool/capacity.hpp"
#include "captool/harness.hpp"

namespace captool {

inline constexpr int kConfigSchemaVersion = 1;

enum class Mode { Capacity, Choquet, Functional, Maximal, Verify, KernelCheck };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

struct LevelsConfig {
  bool adaptive = true;  ///< octaves below the first power of two >= max w
  int k_min = -12;
  int k_max = 6;
  int subdivisions = 4;
  int octaves = 12;
};

struct IoConfig {
  std::string out;        ///< report path; empty writes to stdout
  std::string csv;        ///< optional per-sample CSV (verify)
  std::string histogram;  ///< optional ratio histogram (verify)
  std::string field;      ///< input field; empty uses the indicator of `set`
  std::string field_out;  ///< optional output field (f_star, witness, M f)
  std::string format = "json";
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  Mode mode = Mode::Verify;
  KernelSpec kernel{KernelKind::Bessel, 0.5, 1};
  std::int64_t n = 256;
  double half_extent = 4.0;
  double s = 2.0;
  double q = 1.0;
  SolverOptions solver;
  std::uint64_t seed = 1;
  LevelsConfig levels;
  std::string set = "ball:0.5";

  std::string functional = "gamma";
  double p = 2.0;

  std::vector<double> radii;  ///< empty: automatic
  bool global_maximal = false;
  std::optional<double> domination_q;

  InequalityId which = InequalityId::Mazya;
  std::size_t samples = 50;
  std::optional<FamilyKind> family;
  bool refine = true;
  double skip_budget = 0.1;

  IoConfig io;

  Grid grid() const { return Grid(kernel.dim, n, half_extent); }
  HarnessConfig harness(int jobs) const;
};

/// Throws ConfigError with the byte offset on malformed JSON.
nlohmann::json parse_json_text(const std::string& text);

/// Parses and validates; the ConfigError lists every violation found.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);

/// Problems with a structurally valid config; empty when it may run.
std::vector<std::string> validation_errors(const ExperimentConfig& c);

nlohmann::json to_json(const ExperimentConfig& c);

/// Defaults filled in, names in canonical form.
nlohmann::json normalize(const nlohmann::json& j);

/// "ball:r", "ball:c1,..,cn,r", "box:a,b" (the cube [a,b]^n) or
/// "box:a1,b1,..,an,bn"; unions joined by '+'.
GridSet parse_set_spec(const std::string& spec, const Grid& grid);

struct RunOptions {
  int jobs = 1;
};

/// Executes the configured mode, writes artifacts and returns the exit code
/// (0 success, 2 config, 3 convergence, 4 witness quality, 5 skip budget, 1 other).
int run(const ExperimentConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace captool
