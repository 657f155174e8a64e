#include "captool/config.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <type_traits>

#include "captool/error.hpp"
#include "captool/functionals.hpp"
#include "captool/kernels.hpp"
#include "captool/maximal.hpp"

namespace captool {

using nlohmann::json;

namespace {

const char* const kFunctionals[] = {"gamma", "beta", "lambda", "kv", "mult", "measure"};

bool known_functional(const std::string& w) {
  for (const char* k : kFunctionals)
    if (w == k) return true;
  return false;
}

class Reader {
 public:
  explicit Reader(std::vector<std::string>& errs) : errs_(errs) {}

  const json* object(const json& parent, const char* key, const std::string& path) {
    if (!parent.contains(key)) return nullptr;
    const json& v = parent.at(key);
    if (!v.is_object()) {
      errs_.push_back(path + key + ": expected an object");
      return nullptr;
    }
    return &v;
  }

  void keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) errs_.push_back(path + k + ": unknown key");
    }
  }

  template <class T>
  void get(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string where = path + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail(where, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return fail(where, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() == false && v.get<std::int64_t>() < 0) return fail(where, "a nonnegative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(where, "a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) return fail(where, "a string");
      out = v.get<std::string>();
    }
  }

  void fail(const std::string& where, const char* what) { errs_.push_back(where + ": expected " + what); }

  std::vector<std::string>& errs_;
};

template <class Fn>
void collect(std::vector<std::string>& errs, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    errs.emplace_back(e.what());
  } catch (const Error& e) {
    errs.emplace_back(e.what());
  }
}

std::string join_errors(const std::vector<std::string>& errs) {
  std::string msg = "invalid configuration (" + std::to_string(errs.size()) + " problem" +
                    (errs.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errs) msg += "\n  - " + e;
  return msg;
}

void deep_merge(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [k, v] : patch.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object())
      deep_merge(base[k], v);
    else
      base[k] = v;
  }
}

double parse_number(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' in " + context);
  }
}

std::vector<double> parse_numbers(const std::string& list, const std::string& context) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, context));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os << text;
  if (!os) throw Error("write failed: " + path);
}

Field input_field(const ExperimentConfig& c) {
  if (c.io.field.empty()) return parse_set_spec(c.set, c.grid()).indicator();
  auto f = read_field_binary(c.io.field);
  if (f.grid().dim() != c.kernel.dim)
    throw ConfigError(c.io.field + ": field has dimension " + std::to_string(f.grid().dim()) +
                      ", kernel has dimension " + std::to_string(c.kernel.dim));
  return f;
}

ChoquetConfig choquet_config(const ExperimentConfig& c, const Field& w, int jobs) {
  ChoquetConfig cfg;
  if (c.levels.adaptive && w.max() > 0.0) {
    cfg = adaptive_levels(w, c.levels.octaves, c.levels.subdivisions, c.solver);
  } else {
    cfg.k_min = c.levels.k_min;
    cfg.k_max = c.levels.k_max;
    cfg.subdivisions = c.levels.subdivisions;
    cfg.solver = c.solver;
  }
  cfg.jobs = jobs;
  return cfg;
}

void scalar_result_csv_rows(const json& result, std::string& out, const std::string& prefix = "") {
  for (const auto& [k, v] : result.items()) {
    if (v.is_object()) {
      scalar_result_csv_rows(v, out, prefix + k + ".");
    } else if (v.is_primitive()) {
      out += prefix + k + "," + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    }
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string host_name() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

json run_kernel_check(const ExperimentConfig& c) {
  json r;
  auto values = json::array();
  for (double x : {0.5, 1.0, 2.0}) values.push_back({{"r", x}, {"value", kernel_radial(c.kernel, x)}});
  r["values"] = values;
  if (c.kernel.kind == KernelKind::Bessel) {
    auto t = check_two_sided(c.kernel, c.grid());
    r["two_sided"] = {{"near_origin", t.near_origin},
                      {"shift", t.shift},
                      {"near_samples", t.near_samples},
                      {"shift_samples", t.shift_samples}};
  }
  const Grid small(c.kernel.dim, std::min<std::int64_t>(c.n, c.kernel.dim == 1 ? 32 : (c.kernel.dim == 2 ? 16 : 8)),
                   c.half_extent);
  auto table = build_table(c.kernel, small);
  std::mt19937_64 rng(c.seed);
  std::vector<double> v(small.size());
  for (auto& x : v) x = static_cast<double>(rng() >> 11) * 0x1p-53;
  Field f(small, v, true);
  auto a = convolve(*table, f), b = convolve_direct(*table, f);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]) / std::fabs(b[i]));
  r["convolution_oracle"] = {{"grid", to_json(small)}, {"max_relative_error", worst}};
  return r;
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Capacity: return "capacity";
    case Mode::Choquet: return "choquet";
    case Mode::Functional: return "functional";
    case Mode::Maximal: return "maximal";
    case Mode::Verify: return "verify";
    case Mode::KernelCheck: return "kernel-check";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  for (auto m : {Mode::Capacity, Mode::Choquet, Mode::Functional, Mode::Maximal, Mode::Verify, Mode::KernelCheck})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown mode '" + name + "'");
}

HarnessConfig ExperimentConfig::harness(int jobs) const {
  HarnessConfig h;
  h.spec = kernel;
  h.n = n;
  h.half_extent = half_extent;
  h.s = s;
  h.q = q;
  h.solver = solver;
  h.octaves = levels.octaves;
  h.subdivisions = levels.subdivisions;
  h.samples = samples;
  h.seed = seed;
  h.jobs = jobs;
  h.refine = refine;
  h.skip_budget = skip_budget;
  h.family = family;
  return h;
}

json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

GridSet parse_set_spec(const std::string& spec, const Grid& grid) {
  const int n = grid.dim();
  GridSet out(grid);
  std::stringstream ss(spec);
  std::string part;
  bool any = false;
  while (std::getline(ss, part, '+')) {
    any = true;
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("set '" + part + "': expected shape:numbers");
    const std::string shape = part.substr(0, colon);
    const auto nums = parse_numbers(part.substr(colon + 1), "set '" + part + "'");
    GridSet piece;
    if (shape == "ball") {
      Point c{};
      double r = 0.0;
      if (nums.size() == 1) {
        r = nums[0];
      } else if (nums.size() == static_cast<std::size_t>(n) + 1) {
        for (int d = 0; d < n; ++d) c[d] = nums[static_cast<std::size_t>(d)];
        r = nums.back();
      } else {
        throw ConfigError("set '" + part + "': ball takes r or " + std::to_string(n) + " centre coordinates and r");
      }
      if (!(r > 0.0)) throw ConfigError("set '" + part + "': radius must be positive");
      piece = GridSet::from_predicate(grid, [&](const Point& x) { return distance(x, c, n) <= r; });
    } else if (shape == "box") {
      Point lo{}, hi{};
      if (nums.size() == 2) {
        for (int d = 0; d < n; ++d) lo[d] = nums[0], hi[d] = nums[1];
      } else if (nums.size() == 2 * static_cast<std::size_t>(n)) {
        for (int d = 0; d < n; ++d) lo[d] = nums[2 * d], hi[d] = nums[2 * d + 1];
      } else {
        throw ConfigError("set '" + part + "': box takes a,b or " + std::to_string(2 * n) + " bounds");
      }
      for (int d = 0; d < n; ++d)
        if (!(lo[d] < hi[d])) throw ConfigError("set '" + part + "': box bounds must satisfy a < b");
      piece = GridSet::from_predicate(grid, [&](const Point& x) {
        for (int d = 0; d < n; ++d)
          if (x[d] < lo[d] || x[d] > hi[d]) return false;
        return true;
      });
    } else {
      throw ConfigError("set '" + part + "': unknown shape '" + shape + "' (ball or box)");
    }
    out = out.unite(piece);
  }
  if (!any) throw ConfigError("empty set specification");
  return out;
}

std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> errs;
  if (c.schema_version != kConfigSchemaVersion)
    errs.push_back("schema_version " + std::to_string(c.schema_version) + " is not supported (expected " +
                   std::to_string(kConfigSchemaVersion) + ")");
  collect(errs, [&] { c.kernel.validate(); });
  const Mode m = c.mode;
  if (m != Mode::KernelCheck && m != Mode::Maximal) {
    if (!(c.s > 1.0)) errs.emplace_back("s must exceed 1");
    if (c.kernel.alpha > 0.0 && c.s > 1.0 && c.kernel.alpha * c.s > c.kernel.dim) {
      std::ostringstream os;
      os << "hypothesis alpha > 0, s > 1, alpha*s <= n violated in " << to_string(c.kernel.kind)
         << " mode: alpha*s = " << c.kernel.alpha * c.s << " > n = " << c.kernel.dim;
      errs.push_back(os.str());
    }
  }
  const bool grid_ok = c.n >= 2 && c.half_extent > 0.0 && std::isfinite(c.half_extent);
  if (c.n < 2) errs.emplace_back("grid.n must be at least 2");
  if (!(c.half_extent > 0.0) || !std::isfinite(c.half_extent)) errs.emplace_back("grid.half_extent must be positive");
  const double h = grid_ok ? 2.0 * c.half_extent / static_cast<double>(c.n) : 0.0;
  if (!(c.solver.tol > 0.0 && c.solver.tol < 1.0)) errs.emplace_back("solver.tol must lie in (0, 1)");
  if (c.solver.max_iters < 1) errs.emplace_back("solver.max_iters must be positive");
  if (c.solver.max_cg < 1) errs.emplace_back("solver.max_cg must be positive");
  if (!c.levels.adaptive && c.levels.k_min >= c.levels.k_max) errs.emplace_back("levels.k_min must be below levels.k_max");
  if (c.levels.subdivisions < 1) errs.emplace_back("levels.subdivisions must be positive");
  if (c.levels.octaves < 1) errs.emplace_back("levels.octaves must be positive");
  if (c.io.format != "json" && c.io.format != "csv") errs.push_back("io.format must be json or csv, got '" + c.io.format + "'");
  if (!c.io.field.empty()) {
    std::ifstream is(c.io.field, std::ios::binary);
    if (!is) errs.push_back("io.field: cannot open " + c.io.field);
  }

  const bool uses_set = m == Mode::Capacity ||
                        (c.io.field.empty() && (m == Mode::Choquet || m == Mode::Functional || m == Mode::Maximal));
  if (uses_set && grid_ok && c.kernel.dim >= 1 && c.kernel.dim <= 3) {
    collect(errs, [&] {
      if (parse_set_spec(c.set, c.grid()).empty()) throw ConfigError("set '" + c.set + "' contains no grid cell");
    });
  }

  if (m == Mode::Functional) {
    if (!known_functional(c.functional))
      errs.push_back("functional.which must be one of gamma, beta, lambda, kv, mult, measure; got '" + c.functional +
                     "'");
    if (c.functional == "mult" && !(c.p > 1.0)) errs.emplace_back("functional.p must exceed 1");
    if ((c.functional == "beta" || c.functional == "lambda") && grid_ok && !(h < 0.25))
      errs.emplace_back("the beta witness needs grid spacing below 1/4");
  }
  if (m == Mode::Maximal) {
    if (grid_ok && c.io.field.empty() && h > 1.0) errs.emplace_back("maximal needs grid spacing at most 1");
    for (double r : c.radii)
      if (!(r > 0.0 && r <= 1.0) || (grid_ok && r < h * (1 - 1e-12)))
        errs.push_back("maximal.radii: " + std::to_string(r) + " is outside [h, 1]");
    if (c.global_maximal && c.kernel.kind != KernelKind::Riesz)
      errs.emplace_back("maximal.global is available in Riesz mode only");
    if (c.domination_q && !(*c.domination_q > 0.0)) errs.emplace_back("maximal.domination_q must be positive");
  }
  if (m == Mode::Verify) {
    if (c.samples < 1) errs.emplace_back("verify.samples must be positive");
    if (!(c.skip_budget >= 0.0 && c.skip_budget <= 1.0)) errs.emplace_back("verify.skip_budget must lie in [0, 1]");
    if (!(c.q > 0.0)) errs.emplace_back("q must be positive");
    if (grid_ok && !(h < 0.25)) errs.emplace_back("verify needs grid spacing below 1/4");
    const auto w = c.which;
    if ((w == InequalityId::Lemma31Bessel || w == InequalityId::TwoSidedKernel) && c.kernel.kind != KernelKind::Bessel)
      errs.push_back(to_string(w) + " needs a Bessel kernel");
    if (w == InequalityId::VwhRiesz && c.kernel.kind != KernelKind::Riesz) errs.emplace_back("vwh_riesz needs a Riesz kernel");
    if (w == InequalityId::TwoSidedKernel && c.half_extent < 4.0)
      errs.emplace_back("two_sided_kernel needs grid.half_extent >= 4");
    if (c.family) {
      const auto f = *c.family;
      const bool sets = f == FamilyKind::Sets || f == FamilyKind::ScatteredSets;
      if (w == InequalityId::Lemma31Bessel && f != FamilyKind::Atoms) errs.emplace_back("lemma31_bessel needs the atoms family");
      if (w == InequalityId::QuasiAdd && !sets) errs.emplace_back("quasi_add needs a set family");
      if (w != InequalityId::Lemma31Bessel && w != InequalityId::TwoSidedKernel && f == FamilyKind::Atoms)
        errs.push_back(to_string(w) + " cannot use the atoms family");
    }
  }
  if (m == Mode::KernelCheck && c.kernel.kind == KernelKind::Bessel && c.half_extent < 4.0)
    errs.emplace_back("kernel-check needs grid.half_extent >= 4 for the two-sided estimates");
  return errs;
}

ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> errs;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  Reader rd(errs);
  rd.keys(j, "", {"schema_version", "mode", "kernel", "grid", "s", "q", "solver", "levels", "set", "functional",
                  "maximal", "verify", "io"});
  rd.get(j, "schema_version", "", c.schema_version);
  std::string mode = to_string(c.mode);
  rd.get(j, "mode", "", mode);
  collect(errs, [&] { c.mode = mode_from_string(mode); });
  if (const json* k = rd.object(j, "kernel", "")) {
    rd.keys(*k, "kernel.", {"kind", "alpha", "dim"});
    std::string kind = to_string(c.kernel.kind);
    rd.get(*k, "kind", "kernel.", kind);
    collect(errs, [&] { c.kernel.kind = kernel_kind_from_string(kind); });
    rd.get(*k, "alpha", "kernel.", c.kernel.alpha);
    rd.get(*k, "dim", "kernel.", c.kernel.dim);
  }
  if (const json* g = rd.object(j, "grid", "")) {
    rd.keys(*g, "grid.", {"n", "half_extent"});
    rd.get(*g, "n", "grid.", c.n);
    rd.get(*g, "half_extent", "grid.", c.half_extent);
  }
  rd.get(j, "s", "", c.s);
  rd.get(j, "q", "", c.q);
  if (const json* s = rd.object(j, "solver", "")) {
    rd.keys(*s, "solver.", {"tol", "max_iters", "max_cg", "seed"});
    rd.get(*s, "tol", "solver.", c.solver.tol);
    rd.get(*s, "max_iters", "solver.", c.solver.max_iters);
    rd.get(*s, "max_cg", "solver.", c.solver.max_cg);
    rd.get(*s, "seed", "solver.", c.seed);
  }
  if (const json* l = rd.object(j, "levels", "")) {
    rd.keys(*l, "levels.", {"adaptive", "k_min", "k_max", "subdivisions", "octaves"});
    rd.get(*l, "adaptive", "levels.", c.levels.adaptive);
    rd.get(*l, "k_min", "levels.", c.levels.k_min);
    rd.get(*l, "k_max", "levels.", c.levels.k_max);
    rd.get(*l, "subdivisions", "levels.", c.levels.subdivisions);
    rd.get(*l, "octaves", "levels.", c.levels.octaves);
  }
  rd.get(j, "set", "", c.set);
  if (const json* f = rd.object(j, "functional", "")) {
    rd.keys(*f, "functional.", {"which", "p"});
    rd.get(*f, "which", "functional.", c.functional);
    rd.get(*f, "p", "functional.", c.p);
  }
  if (const json* mx = rd.object(j, "maximal", "")) {
    rd.keys(*mx, "maximal.", {"radii", "global", "domination_q"});
    if (mx->contains("radii")) {
      const json& r = mx->at("radii");
      if (r.is_string() && r.get<std::string>() == "auto") {
        c.radii.clear();
      } else if (r.is_array() && std::all_of(r.begin(), r.end(), [](const json& x) { return x.is_number(); })) {
        c.radii = r.get<std::vector<double>>();
      } else {
        errs.emplace_back("maximal.radii: expected \"auto\" or an array of numbers");
      }
    }
    rd.get(*mx, "global", "maximal.", c.global_maximal);
    if (mx->contains("domination_q") && !mx->at("domination_q").is_null()) {
      double q = 0.0;
      rd.get(*mx, "domination_q", "maximal.", q);
      c.domination_q = q;
    }
  }
  if (const json* v = rd.object(j, "verify", "")) {
    rd.keys(*v, "verify.", {"which", "samples", "family", "refine", "skip_budget"});
    std::string which = to_string(c.which);
    rd.get(*v, "which", "verify.", which);
    collect(errs, [&] { c.which = inequality_from_string(which); });
    rd.get(*v, "samples", "verify.", c.samples);
    if (v->contains("family") && !v->at("family").is_null()) {
      std::string fam;
      rd.get(*v, "family", "verify.", fam);
      if (!fam.empty()) collect(errs, [&] { c.family = family_from_string(fam); });
    }
    rd.get(*v, "refine", "verify.", c.refine);
    rd.get(*v, "skip_budget", "verify.", c.skip_budget);
  }
  if (const json* io = rd.object(j, "io", "")) {
    rd.keys(*io, "io.", {"out", "csv", "histogram", "field", "field_out", "format"});
    rd.get(*io, "out", "io.", c.io.out);
    rd.get(*io, "csv", "io.", c.io.csv);
    rd.get(*io, "histogram", "io.", c.io.histogram);
    rd.get(*io, "field", "io.", c.io.field);
    rd.get(*io, "field_out", "io.", c.io.field_out);
    rd.get(*io, "format", "io.", c.io.format);
  }
  for (auto& e : validation_errors(c)) errs.push_back(std::move(e));
  if (!errs.empty()) throw ConfigError(join_errors(errs));
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) { return parse_config(parse_json_text(text)); }

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["mode"] = to_string(c.mode);
  j["kernel"] = {{"kind", to_string(c.kernel.kind)}, {"alpha", c.kernel.alpha}, {"dim", c.kernel.dim}};
  j["grid"] = {{"n", c.n}, {"half_extent", c.half_extent}};
  j["s"] = c.s;
  j["q"] = c.q;
  j["solver"] = {{"tol", c.solver.tol}, {"max_iters", c.solver.max_iters}, {"max_cg", c.solver.max_cg}, {"seed", c.seed}};
  j["levels"] = {{"adaptive", c.levels.adaptive},
                 {"k_min", c.levels.k_min},
                 {"k_max", c.levels.k_max},
                 {"subdivisions", c.levels.subdivisions},
                 {"octaves", c.levels.octaves}};
  j["set"] = c.set;
  j["functional"] = {{"which", c.functional}, {"p", c.p}};
  j["maximal"] = {{"radii", c.radii.empty() ? json("auto") : json(c.radii)},
                  {"global", c.global_maximal},
                  {"domination_q", c.domination_q ? json(*c.domination_q) : json(nullptr)}};
  j["verify"] = {{"which", to_string(c.which)},
                 {"samples", c.samples},
                 {"family", c.family ? json(to_string(*c.family)) : json(nullptr)},
                 {"refine", c.refine},
                 {"skip_budget", c.skip_budget}};
  j["io"] = {{"out", c.io.out},           {"csv", c.io.csv},
             {"histogram", c.io.histogram}, {"field", c.io.field},
             {"field_out", c.io.field_out}, {"format", c.io.format}};
  return j;
}

json normalize(const json& j) {
  json out = to_json(ExperimentConfig{});
  deep_merge(out, j);
  auto canon = [](json& v, auto&& fn) {
    if (!v.is_string()) return;
    try {
      v = fn(v.get<std::string>());
    } catch (const ConfigError&) {
    }
  };
  canon(out["mode"], [](const std::string& s) { return to_string(mode_from_string(s)); });
  canon(out["kernel"]["kind"], [](const std::string& s) { return to_string(kernel_kind_from_string(s)); });
  canon(out["verify"]["which"], [](const std::string& s) { return to_string(inequality_from_string(s)); });
  canon(out["verify"]["family"], [](const std::string& s) { return to_string(family_from_string(s)); });
  auto as_double = [](json& v) {
    if (v.is_number()) v = v.get<double>();
  };
  as_double(out["kernel"]["alpha"]);
  as_double(out["grid"]["half_extent"]);
  as_double(out["s"]);
  as_double(out["q"]);
  as_double(out["solver"]["tol"]);
  as_double(out["functional"]["p"]);
  as_double(out["verify"]["skip_budget"]);
  as_double(out["maximal"]["domination_q"]);
  auto& radii = out["maximal"]["radii"];
  if (radii.is_array()) {
    if (radii.empty()) radii = "auto";
    for (auto& r : radii) as_double(r);
  }
  return out;
}

int run(const ExperimentConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    if (auto errs = validation_errors(c); !errs.empty()) throw ConfigError(join_errors(errs));
    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    const int jobs = std::max(1, opts.jobs);
    json result;
    std::string csv;
    int code = 0;
    std::string late_error;

    switch (c.mode) {
      case Mode::Capacity: {
        const CapacityProblem problem{c.kernel, parse_set_spec(c.set, c.grid()), c.s};
        auto cm = capacitary_measure(problem, c.solver);
        result = to_json(cm.result);
        result["identities"] = {cm.identities[0], cm.identities[1], cm.identities[2]};
        result["min_potential_on_set"] = cm.min_potential_on_set;
        result["set_cells"] = problem.set.count();
        result["set_measure"] = problem.set.measure();
        if (!c.io.field_out.empty()) {
          write_field_binary(c.io.field_out, cm.result.f_star);
          result["f_star_file"] = c.io.field_out;
        }
        break;
      }
      case Mode::Choquet: {
        const auto w = abs(input_field(c));
        result = to_json(choquet_integral(w, c.kernel, c.s, choquet_config(c, w, jobs)));
        break;
      }
      case Mode::Functional: {
        const auto u = input_field(c);
        const Grid& g = u.grid();
        FunctionalValue v;
        WitnessOptions wo;
        if (c.functional == "beta" || c.functional == "lambda") {
          const double top = abs(u).max();
          if (c.levels.adaptive && top > 0.0) {
            wo.levels.k_max = static_cast<int>(std::ceil(std::log2(top)));
            wo.levels.k_min = wo.levels.k_max - c.levels.octaves;
          } else {
            wo.levels.k_min = c.levels.k_min;
            wo.levels.k_max = c.levels.k_max;
          }
          wo.levels.solver = c.solver;
          wo.jobs = jobs;
        }
        if (c.functional == "gamma") v = gamma_functional(u, c.kernel, c.s, c.solver);
        if (c.functional == "beta") v = beta_witness_from_choquet(u, c.kernel, c.s, wo);
        if (c.functional == "lambda") v = lambda_upper(u, c.kernel, c.s, wo);
        if (c.functional == "kv") v = kv_upper(u, c.kernel, c.s);
        if (c.functional == "mult") v = multiplier_norm(u, c.p, c.kernel, c.s, default_family(u), c.solver, jobs);
        if (c.functional == "measure")
          v = measure_norm(AtomicMeasure::from_cell_masses(abs(u)), g, c.kernel, c.s, dyadic_boxes(g), c.solver, jobs);
        result = to_json(v);
        if (!c.io.field_out.empty() && v.witness) {
          write_field_binary(c.io.field_out, *v.witness);
          result["witness_file"] = c.io.field_out;
        }
        if (v.flagged) {
          code = 4;
          late_error = "witness rescale constant " + std::to_string(v.rescale) + " exceeds the quality ceiling";
        }
        break;
      }
      case Mode::Maximal: {
        const auto f = input_field(c);
        const Grid& g = f.grid();
        Field M;
        json radii = json::array();
        if (c.global_maximal) {
          M = global_maximal(f, c.kernel);
        } else {
          const RadiusSet rs = c.radii.empty() ? RadiusSet::automatic(g) : RadiusSet(g, c.radii);
          for (double r : rs.radii()) radii.push_back(r);
          M = local_maximal(f, rs);
        }
        result = {{"max", M.max()},
                  {"min", M.min()},
                  {"integral", integrate(M)},
                  {"radii", radii},
                  {"global", c.global_maximal},
                  {"boundary_policy", "clipped-ball averaging normalised by the clipped cell count"}};
        if (c.domination_q) result["domination_ratio"] = potential_maximal_domination(abs(f), *c.domination_q, c.kernel);
        if (!c.io.field_out.empty()) {
          write_field_binary(c.io.field_out, M);
          result["field_file"] = c.io.field_out;
        }
        break;
      }
      case Mode::Verify: {
        const auto rep = verify(c.which, c.harness(jobs));
        result = to_json(rep);
        csv = to_csv(rep);
        if (!c.io.csv.empty()) write_text(c.io.csv, csv);
        if (!c.io.histogram.empty()) write_text(c.io.histogram, ratio_histogram(rep));
        if (rep.skip_budget_exceeded()) {
          code = 5;
          try {
            enforce_skip_budget(rep);
          } catch (const SkipBudgetError& e) {
            late_error = e.what();
          }
        } else if (rep.flagged > 0) {
          code = 4;
          late_error = std::to_string(rep.flagged) + " samples flagged for witness quality";
        }
        break;
      }
      case Mode::KernelCheck:
        result = run_kernel_check(c);
        break;
    }

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json doc;
    doc["metadata"] = {{"tool", "captool"},   {"started_utc", started}, {"elapsed_seconds", elapsed},
                       {"host", host_name()}, {"jobs", jobs},           {"exit_code", code}};
    doc["payload"] = {{"schema_version", kReportSchemaVersion}, {"config", to_json(c)}, {"result", result}};

    std::string text;
    if (c.io.format == "csv") {
      if (csv.empty()) {
        csv = "key,value\n";
        scalar_result_csv_rows(result, csv);
      }
      text = csv;
    } else {
      text = doc.dump(2) + "\n";
    }
    if (c.io.out.empty())
      out << text;
    else
      write_text(c.io.out, text);
    if (!late_error.empty()) err << "captool: " << late_error << "\n";
    return code;
  } catch (const Error& e) {
    err << "captool: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "captool: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace captool
