#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "sasaki/runner.hpp"

namespace sasaki {

namespace {

const std::set<std::string> kMonitors = {"entropy",          "positivity",      "quotient",
                                         "scalar_evolution", "gradient_bounds", "reeb_family"};
const std::set<std::string> kGeometries = {"round_sphere", "football", "chart_torus"};
const std::set<std::string> kKeys = {"schema", "name",        "geometry",   "n",          "p",
                                     "q",      "N",           "dt_policy",  "dt",         "dt_fraction",
                                     "t_end",  "tau0",        "monitors",   "output_dir", "seed",
                                     "checkpoint_cadence",    "perturbation", "torus_eps", "soliton_tol",
                                     "reeb_rhos", "reeb_target"};

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  fail(ErrorKind::ConfigInvalid, field + ": " + why);
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(key, "wrong type");
  }
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid("file", std::string("not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) invalid("file", "top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKeys.count(it.key())) invalid(it.key(), "unknown key");
  if (get<std::string>(j, "schema", "") != kConfigSchema)
    invalid("schema", std::string("expected \"") + kConfigSchema + "\"");
  ScenarioConfig c;
  c.name = get<std::string>(j, "name", "");
  c.geometry = get<std::string>(j, "geometry", "");
  c.n = get<int>(j, "n", 1);
  c.p = get<int>(j, "p", 1);
  c.q = get<int>(j, "q", 1);
  c.N = get<int>(j, "N", c.N);
  c.dt_policy = get<std::string>(j, "dt_policy", c.dt_policy);
  c.dt = get<double>(j, "dt", c.dt);
  c.dt_fraction = get<double>(j, "dt_fraction", c.dt_fraction);
  c.t_end = get<double>(j, "t_end", c.t_end);
  c.tau0 = get<double>(j, "tau0", c.tau0);
  c.monitors = get<std::vector<std::string>>(j, "monitors", {});
  c.output_dir = get<std::string>(j, "output_dir", c.output_dir);
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.checkpoint_cadence = get<double>(j, "checkpoint_cadence", c.checkpoint_cadence);
  c.perturbation = get<double>(j, "perturbation", c.perturbation);
  c.torus_eps = get<double>(j, "torus_eps", c.torus_eps);
  c.soliton_tol = get<double>(j, "soliton_tol", c.soliton_tol);
  c.reeb_rhos = get<std::vector<double>>(j, "reeb_rhos", {});
  c.reeb_target = get<double>(j, "reeb_target", c.reeb_target);
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("file", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ScenarioConfig& c) {
  if (c.name.empty()) invalid("name", "must be nonempty");
  if (c.name.find_first_of("/\\") != std::string::npos) invalid("name", "must not contain path separators");
  if (!kGeometries.count(c.geometry)) invalid("geometry", "expected round_sphere, football or chart_torus");
  if (c.N < 32) invalid("N", "must be at least 32");
  if (!(c.t_end > 0.0) || !std::isfinite(c.t_end)) invalid("t_end", "must be positive");
  if (!(c.tau0 > 0.0)) invalid("tau0", "must be positive");
  if (!(c.checkpoint_cadence > 0.0)) invalid("checkpoint_cadence", "must be positive");
  if (c.dt_policy != "cfl" && c.dt_policy != "fixed") invalid("dt_policy", "expected cfl or fixed");
  if (c.dt_policy == "fixed" && !(c.dt > 0.0)) invalid("dt", "fixed policy needs dt > 0");
  if (!(c.dt_fraction > 0.0) || c.dt_fraction > 1.0) invalid("dt_fraction", "must lie in (0, 1]");
  if (c.monitors.empty()) invalid("monitors", "must be nonempty");
  std::set<std::string> seen;
  for (const auto& m : c.monitors) {
    if (!kMonitors.count(m)) invalid("monitors", "unknown monitor " + m);
    if (!seen.insert(m).second) invalid("monitors", "duplicate monitor " + m);
  }
  if (c.geometry == "football") {
    if (c.p < 1 || c.q < 1) invalid("p,q", "must be positive integers");
    if (std::gcd(c.p, c.q) != 1) invalid("p,q", "must be coprime");
  }
  if (c.geometry == "round_sphere" && c.n != 1) invalid("n", "only n = 1 is evolved (axisymmetric lane)");
  if (c.geometry == "chart_torus") {
    if (c.n != 1) invalid("n", "torus charts are supported for n = 1");
    if (c.N > 256) invalid("N", "torus charts are limited to 256 points per axis");
    for (const auto& m : c.monitors)
      if (m != "entropy" && m != "positivity") invalid("monitors", m + " needs an axisymmetric geometry");
  }
  if (seen.count("reeb_family")) {
    if (c.reeb_rhos.empty()) invalid("reeb_rhos", "reeb_family needs a nonempty ratio sequence");
    for (double r : c.reeb_rhos)
      if (!(r > 0.0)) invalid("reeb_rhos", "ratios must be positive");
    if (!(c.reeb_target > 0.0)) invalid("reeb_target", "must be positive");
  }
  if (c.soliton_tol < 0.0) invalid("soliton_tol", "must be nonnegative");
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["name"] = c.name;
  j["geometry"] = c.geometry;
  j["n"] = c.n;
  j["p"] = c.p;
  j["q"] = c.q;
  j["N"] = c.N;
  j["dt_policy"] = c.dt_policy;
  j["dt"] = c.dt;
  j["dt_fraction"] = c.dt_fraction;
  j["t_end"] = c.t_end;
  j["tau0"] = c.tau0;
  j["monitors"] = c.monitors;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["checkpoint_cadence"] = c.checkpoint_cadence;
  j["perturbation"] = c.perturbation;
  j["torus_eps"] = c.torus_eps;
  j["soliton_tol"] = c.soliton_tol;
  j["reeb_rhos"] = c.reeb_rhos;
  j["reeb_target"] = c.reeb_target;
  return j;
}

}  // namespace sasaki
