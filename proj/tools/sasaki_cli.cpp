#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "sasaki/runner.hpp"
#include "sasaki/profile.hpp"
#include "sasaki/soliton.hpp"

using namespace sasaki;

namespace {

ScenarioConfig load_with_env(const std::string& path) {
  ScenarioConfig cfg = load_config(path);
  if (const char* o = std::getenv("OUTPUT_DIR"); o && *o) cfg.output_dir = o;
  return cfg;
}

int cmd_run(const std::string& path) {
  ScenarioConfig cfg = load_with_env(path);
  RunReport rep = run(cfg);
  for (const auto& v : rep.verdicts) std::printf("%-34s %s  %s\n", v.name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::printf("status: %s (%zu files in %s)\n", rep.status.c_str(), rep.manifest.size() + 2,
              rep.output_dir.string().c_str());
  return rep.passed() ? kExitPass : kExitAssertion;
}

int cmd_compare(const std::string& a, const std::string& b, double tol) {
  CompareResult r = compare(a, b);
  std::printf("series,column,max_deviation\n");
  for (const auto& d : r.diffs)
    std::printf("%s,%s,%s\n", d.series.c_str(), d.column.c_str(), format_number(d.max_deviation).c_str());
  std::printf("max_deviation,%s\n", format_number(r.max_deviation).c_str());
  return r.max_deviation <= tol ? kExitPass : kExitAssertion;
}

int cmd_validate(const std::string& path) {
  ScenarioConfig cfg = load_with_env(path);
  std::printf("%s\n", to_json(cfg).dump(2).c_str());
  return kExitPass;
}

int cmd_oracle(int p, int q, int N) {
  if (p < 1 || q < 1) fail(ErrorKind::ConfigInvalid, "p,q: must be positive integers");
  if (N < 8) fail(ErrorKind::ConfigInvalid, "N: must be at least 8");
  Profile base = football_profile(p, q, N);
  SolitonProfile s = soliton_shooting(base.beta_minus, base.beta_plus, N);
  std::fprintf(stderr, "alpha = %s on [-%s, %s]\n", format_number(s.alpha).c_str(),
               format_number(s.beta_minus).c_str(), format_number(s.beta_plus).c_str());
  std::cout << csv_text(Series{"soliton", {"x", "psi"}, [&] {
                                 std::vector<std::vector<double>> rows;
                                 for (std::size_t j = 0; j < s.x.size(); ++j) rows.push_back({s.x[j], s.psi[j]});
                                 return rows;
                               }()});
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sasaki-Ricci flow laboratory"};
  app.require_subcommand(1);

  std::string cfg_path, a, b;
  double tol = 0.0;
  int p = 1, q = 1, N = 256;

  auto* run_cmd = app.add_subcommand("run", "run a scenario and write its artifacts");
  run_cmd->add_option("config", cfg_path, "scenario config (JSON)")->required();
  auto* cmp = app.add_subcommand("compare", "per-series max deviation between two reports");
  cmp->add_option("a", a, "report.json or its directory")->required();
  cmp->add_option("b", b, "report.json or its directory")->required();
  cmp->add_option("--tol", tol, "exit 2 when the max deviation exceeds this");
  auto* val = app.add_subcommand("validate", "parse and validate a config");
  val->add_option("config", cfg_path, "scenario config (JSON)")->required();
  auto* oracle = app.add_subcommand("oracle", "independent reference solutions");
  auto* sol = oracle->add_subcommand("soliton", "shoot the axisymmetric soliton ODE");
  oracle->require_subcommand(1);
  sol->add_option("--p", p, "cone weight at the left pole")->required();
  sol->add_option("--q", q, "cone weight at the right pole")->required();
  sol->add_option("--N", N, "grid cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(cfg_path);
    if (*cmp) return cmd_compare(a, b, tol);
    if (*val) return cmd_validate(cfg_path);
    if (*sol) return cmd_oracle(p, q, N);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return e.kind() == ErrorKind::ConfigInvalid ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
