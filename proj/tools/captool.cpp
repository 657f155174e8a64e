#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "captool/config.hpp"
#include "captool/error.hpp"
#include "captool/parallel.hpp"

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw captool::ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json parse_levels(const std::string& spec) {
  if (spec == "auto") return {{"adaptive", true}};
  json l{{"adaptive", false}};
  std::stringstream ss(spec);
  std::string part;
  std::vector<int> v;
  try {
    while (std::getline(ss, part, ':')) v.push_back(std::stoi(part));
  } catch (const std::exception&) {
    throw captool::ConfigError("--levels expects auto, kmin:kmax or kmin:kmax:subdivisions");
  }
  if (v.size() < 2 || v.size() > 3) throw captool::ConfigError("--levels expects auto, kmin:kmax or kmin:kmax:subdivisions");
  l["k_min"] = v[0];
  l["k_max"] = v[1];
  if (v.size() == 3) l["subdivisions"] = v[2];
  return l;
}

json parse_radii(const std::string& spec) {
  if (spec == "auto") return "auto";
  json a = json::array();
  std::stringstream ss(spec);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) a.push_back(std::stod(part));
  } catch (const std::exception&) {
    throw captool::ConfigError("--radii expects auto or a comma-separated list");
  }
  return a;
}

struct Patch {
  json j = json::object();
  std::vector<std::function<void()>> deferred;
};

void common_options(CLI::App* sub, Patch& p) {
  sub->add_option_function<std::string>("--kind", [&p](const std::string& v) { p.j["kernel"]["kind"] = v; },
                                        "kernel: bessel or riesz");
  sub->add_option_function<double>("--alpha", [&p](double v) { p.j["kernel"]["alpha"] = v; }, "kernel order");
  sub->add_option_function<int>("--dim", [&p](int v) { p.j["kernel"]["dim"] = v; }, "dimension");
  sub->add_option_function<double>("--s", [&p](double v) { p.j["s"] = v; }, "capacity exponent s > 1");
  sub->add_option_function<std::int64_t>("--n", [&p](std::int64_t v) { p.j["grid"]["n"] = v; }, "points per axis");
  sub->add_option_function<double>("--L", [&p](double v) { p.j["grid"]["half_extent"] = v; }, "grid half extent");
  sub->add_option_function<double>("--tol", [&p](double v) { p.j["solver"]["tol"] = v; }, "relative duality gap");
  sub->add_option_function<int>("--max-iters", [&p](int v) { p.j["solver"]["max_iters"] = v; }, "solver iterations");
  sub->add_option_function<std::uint64_t>("--seed", [&p](std::uint64_t v) { p.j["solver"]["seed"] = v; }, "seed");
  sub->add_option_function<std::string>("--out", [&p](const std::string& v) { p.j["io"]["out"] = v; },
                                        "report path (default stdout)");
  sub->add_option_function<std::string>("--format", [&p](const std::string& v) { p.j["io"]["format"] = v; },
                                        "json or csv");
}

void field_options(CLI::App* sub, Patch& p) {
  sub->add_option_function<std::string>("--field", [&p](const std::string& v) { p.j["io"]["field"] = v; },
                                        "input field (binary)");
  sub->add_option_function<std::string>("--set", [&p](const std::string& v) { p.j["set"] = v; },
                                        "set spec, e.g. ball:0.5 or box:0,1 (joined by +)");
  sub->add_option_function<std::string>("--field-out", [&p](const std::string& v) { p.j["io"]["field_out"] = v; },
                                        "output field (binary)");
}

void level_options(CLI::App* sub, Patch& p) {
  sub->add_option_function<std::string>("--levels", [&p](const std::string& v) { p.deferred.push_back([&p, v] {
                                          const json l = parse_levels(v);
                                          for (auto& [k, x] : l.items()) p.j["levels"][k] = x;
                                        }); },
                                        "auto, kmin:kmax or kmin:kmax:subdivisions");
  sub->add_option_function<int>("--octaves", [&p](int v) { p.j["levels"]["octaves"] = v; }, "adaptive octaves");
  sub->add_option_function<int>("--subdivisions", [&p](int v) { p.j["levels"]["subdivisions"] = v; },
                                "levels per octave");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"captool: capacities, Choquet integrals and inequality harnesses on grids"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  int jobs = captool::default_jobs();
  std::string format;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  Patch p;
  auto* cap = app.add_subcommand("capacity", "capacity of a set, with dual certificate");
  common_options(cap, p);
  field_options(cap, p);

  auto* cho = app.add_subcommand("choquet", "Choquet integral of a field");
  common_options(cho, p);
  field_options(cho, p);
  level_options(cho, p);

  auto* fun = app.add_subcommand("functional", "gamma, beta, lambda, kv, mult or measure");
  common_options(fun, p);
  field_options(fun, p);
  level_options(fun, p);
  fun->add_option_function<std::string>("--which", [&p](const std::string& v) { p.j["functional"]["which"] = v; },
                                        "gamma|beta|lambda|kv|mult|measure");
  fun->add_option_function<double>("--p", [&p](double v) { p.j["functional"]["p"] = v; }, "multiplier exponent");

  auto* mx = app.add_subcommand("maximal", "local maximal function of a field");
  common_options(mx, p);
  field_options(mx, p);
  mx->add_option_function<std::string>("--radii", [&p](const std::string& v) { p.deferred.push_back([&p, v] {
                                         p.j["maximal"]["radii"] = parse_radii(v);
                                       }); },
                                       "auto or r1,r2,...");
  mx->add_flag_callback("--global", [&p] { p.j["maximal"]["global"] = true; }, "global operator (Riesz only)");
  mx->add_option_function<double>("--domination-q", [&p](double v) { p.j["maximal"]["domination_q"] = v; },
                                  "report sup M[(G*h)^{1/q}]/(G*h)^{1/q} for h = |field|");

  auto* ver = app.add_subcommand("verify", "run an inequality harness");
  common_options(ver, p);
  level_options(ver, p);
  ver->add_option_function<std::string>("--which", [&p](const std::string& v) { p.j["verify"]["which"] = v; },
                                        "mazya|capstrong|gfl1c|thm12|lemma31|vwh_riesz|thm13|quasiadd|"
                                        "two_sided_kernel|mvn_chain");
  ver->add_option_function<double>("--q", [&p](double v) { p.j["q"] = v; }, "maximal-function power");
  ver->add_option_function<std::size_t>("--samples", [&p](std::size_t v) { p.j["verify"]["samples"] = v; },
                                        "samples per grid");
  ver->add_option_function<std::string>("--family", [&p](const std::string& v) { p.j["verify"]["family"] = v; },
                                        "bumps|far_bumps|sets|scattered_sets|capacitary_densities|atoms");
  ver->add_flag_callback("--no-refine", [&p] { p.j["verify"]["refine"] = false; }, "skip the 2N run");
  ver->add_option_function<double>("--skip-budget", [&p](double v) { p.j["verify"]["skip_budget"] = v; },
                                   "allowed fraction of skipped samples");
  ver->add_option_function<std::string>("--csv", [&p](const std::string& v) { p.j["io"]["csv"] = v; },
                                        "per-sample CSV path");
  ver->add_option_function<std::string>("--histogram", [&p](const std::string& v) { p.j["io"]["histogram"] = v; },
                                        "ratio histogram data path");

  auto* ker = app.add_subcommand("kernel-check", "kernel values, two-sided constants, convolution oracle");
  common_options(ker, p);

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = config_path.empty() ? json::object() : captool::parse_json_text(read_file(config_path));
    if (!cfg.is_object()) throw captool::ConfigError("configuration must be a JSON object");
    for (auto& fn : p.deferred) fn();
    if (!format.empty()) p.j["io"]["format"] = format;
    p.j["mode"] = app.get_subcommands().front()->get_name();
    for (auto& [k, v] : p.j.items()) {
      if (v.is_object() && cfg.contains(k) && cfg[k].is_object())
        cfg[k].update(v);
      else
        cfg[k] = v;
    }
    const auto experiment = captool::parse_config(cfg);
    return captool::run(experiment, {jobs}, std::cout, std::cerr);
  } catch (const captool::Error& e) {
    std::cerr << "captool: " << e.what() << "\n";
    return e.exit_code();
  }
}
