#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sasaki/ambient.hpp"
#include "sasaki/entropy.hpp"
#include "sasaki/flow.hpp"
#include "sasaki/hodge.hpp"
#include "sasaki/models.hpp"
#include "sasaki/positivity.hpp"
#include "sasaki/runner.hpp"
#include "sasaki/soliton.hpp"

using namespace sasaki;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path out_root() {
  if (const char* o = std::getenv("OUTPUT_DIR"); o && *o) return fs::path(o) / "acceptance";
  return fs::current_path() / "acceptance_out";
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Series series_of(const RunReport& rep, const std::string& name) {
  return parse_csv(name, slurp(rep.output_dir / (name + ".csv")));
}

const Verdict* verdict_of(const RunReport& rep, const std::string& name) {
  for (const auto& v : rep.verdicts)
    if (v.name == name) return &v;
  return nullptr;
}

ScenarioConfig scenario(const std::string& name, const std::string& geometry, int N, double t_end,
                        std::vector<std::string> monitors) {
  ScenarioConfig c;
  c.name = name;
  c.geometry = geometry;
  c.N = N;
  c.t_end = t_end;
  c.monitors = std::move(monitors);
  c.output_dir = (out_root() / name).string();
  return c;
}

// Runs each scenario once; several criteria read the same artifacts.
const RunReport& cached(const ScenarioConfig& c) {
  static std::map<std::string, RunReport> runs;
  auto it = runs.find(c.name);
  if (it == runs.end()) it = runs.emplace(c.name, run(c)).first;
  return it->second;
}

ScenarioConfig fixed_point_cfg() {
  auto c = scenario("fixed_point", "round_sphere", 64, 20.0,
                    {"entropy", "positivity", "quotient", "scalar_evolution", "gradient_bounds"});
  c.checkpoint_cadence = 1.0;
  return c;
}

ScenarioConfig perturbed_cfg() {
  auto c = scenario("perturbed_fixed_point", "round_sphere", 128, 1.0, {"entropy", "gradient_bounds"});
  c.perturbation = 0.05;
  c.checkpoint_cadence = 0.1;
  return c;
}

ScenarioConfig football_cfg() {
  auto c = scenario("football_2_3", "football", 64, 40.0, {"positivity", "quotient", "gradient_bounds"});
  c.p = 2;
  c.q = 3;
  c.checkpoint_cadence = 1.0;
  return c;
}

ScenarioConfig teardrop_cfg(int N) {
  auto c = scenario("teardrop_N" + std::to_string(N), "football", N, 40.0, {"positivity"});
  c.p = 1;
  c.q = 3;
  c.checkpoint_cadence = 1.0;
  c.soliton_tol = 1e-4;
  return c;
}

// 1. Curvature identities on the round spheres.
Outcome identities() {
  auto t0 = std::chrono::steady_clock::now();
  auto s3 = curvature_relations_check(round_sphere_sample(1));
  auto s5 = curvature_relations_check(round_sphere_sample(2));
  double e3 = std::max(std::abs(s3.ambient_scalar - 6.0), std::abs(s3.transverse_scalar - 8.0));
  double e5 = std::max(std::abs(s5.ambient_scalar - 20.0), std::abs(s5.transverse_scalar - 24.0));
  double res = std::max({s3.ricci_residual, s3.scalar_residual, s5.ricci_residual, s5.scalar_residual});
  double dt = seconds_since(t0);
  return {e3 < 1e-10 && e5 < 1e-10 && res < 1e-10 && dt < 10.0,
          "S3 R=" + num(s3.ambient_scalar) + " RT=" + num(s3.transverse_scalar) + ", S5 R=" + num(s5.ambient_scalar) +
              " RT=" + num(s5.transverse_scalar) + ", max residual " + num(res) + ", " + num(dt) + " s"};
}

// 2. Second-order convergence of metric, connection and scalar curvature on a Fubini-Study patch.
Outcome fs_convergence() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::array<double, 3>> err;
  for (int N : {64, 128, 256}) {
    LocalChart c = fubini_study_chart(1, N + 1, 1.0);
    auto m = metric_from_chart(c);
    auto k = curvature(m);
    std::array<double, 3> e{0, 0, 0};
    for (std::size_t p = 0; p < m.size(); ++p) {
      cplx z = c.grid.z_at(p)[0];
      if (std::abs(z.real()) > 0.5 || std::abs(z.imag()) > 0.5) continue;
      double r2 = std::norm(z);
      e[0] = std::max(e[0], std::abs(m.g[0][p] - 1.0 / ((1.0 + r2) * (1.0 + r2))));
      e[1] = std::max(e[1], std::abs(m.christoffel[0][p] - (-2.0 * std::conj(z) / (1.0 + r2))));
      e[2] = std::max(e[2], std::abs(k.scalar[p] - 8.0));
    }
    err.push_back(e);
  }
  bool ok = true;
  std::string d;
  const char* names[3] = {"g", "Gamma", "RT"};
  for (int q = 0; q < 3; ++q) {
    d += std::string(names[q]) + " ratios";
    for (int s = 0; s + 1 < 3; ++s) {
      double r = err[s][q] / err[s + 1][q];
      ok = ok && r > 3.2 && r < 4.8;
      d += " " + num(r);
    }
    d += "; ";
  }
  double dt = seconds_since(t0);
  return {ok && dt < 60.0, d + num(dt) + " s"};
}

// 3. Kahler identities and Weitzenboeck formula on the randomized battery of a curved periodic chart.
Outcome kahler_weitzenbock() {
  std::vector<double> worst;
  for (int N : {32, 64, 128}) {
    auto m = metric_from_chart(torus_chart(1, N, 0.15));
    auto k = curvature(m);
    auto a = kahler_identities_residual(m, random_form(m.grid(), 1, 1, 1, 8));
    auto b = kahler_identities_residual(m, random_form(m.grid(), 1, 0, 1, 9));
    auto w = weitzenbock_residual(m, k, random_form(m.grid(), 1, 0, 1, 6));
    worst.push_back(std::max({a.lambda_del, a.lambda_delbar, a.basic_vs_delbar, a.cross, b.lambda_del,
                              b.lambda_delbar, b.basic_vs_delbar, b.cross, w.general, w.ricci}));
  }
  double r1 = worst[0] / worst[1], r2 = worst[1] / worst[2];
  return {r1 > 3.2 && r2 > 3.2 && worst[2] < 5e-3,
          "max residual " + num(worst[0]) + " / " + num(worst[1]) + " / " + num(worst[2]) + " at N=32/64/128, ratios " +
              num(r1) + " " + num(r2)};
}

// 4. Integration by parts on the periodic chart.
Outcome integration_by_parts() {
  double spectral = 0.0, central = 0.0;
  for (auto [st, out] : {std::pair{Stencil::spectral, &spectral}, std::pair{Stencil::central2, &central}}) {
    auto m = metric_from_chart(torus_chart(1, 128, 0.15, st));
    for (auto [p, q] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}})
      *out = std::max(*out, ibp_check(m, random_form(m.grid(), 1, p, q, 5), random_form(m.grid(), 1, p, q, 6)).residual);
  }
  return {spectral < 1e-6,
          "spectral stencil residual " + num(spectral) + " (central differences: " + num(central) + ")"};
}

// 5. Stationarity of the transverse-Einstein fixed point.
Outcome stationarity() {
  const auto& rep = cached(fixed_point_cfg());
  double phi = rep.summaries["flow"]["phi_max"].get<double>(), drift = 0.0;
  for (const auto& s : rep.series) {
    Series csv = series_of(rep, s.name);
    for (std::size_t c = 1; c < csv.columns.size(); ++c)
      for (const auto& row : csv.rows) {
        double a = row[c], b = csv.rows[0][c];
        if (std::isnan(a) || std::isnan(b)) continue;
        drift = std::max(drift, std::abs(a - b));
      }
  }
  return {phi < 1e-10 && drift < 1e-8, "phi_max " + num(phi) + ", max drift over all series " + num(drift)};
}

// 6. Entropy at the fixed point.
Outcome fixed_point_entropy() {
  Profile p = round_profile(64);
  auto g = entropy_geometry(p);
  MinimizerOptions mo;
  mo.tol = 1e-8;
  mo.random_starts = 5;
  auto r = mu_minimize(g, 1.0, EntropyConvention::riemannian, mo);
  auto rk = mu_minimize(g, 1.0, EntropyConvention::kahler, mo);
  double V = profile_ops::integrate(profile_ops::volume_weights(p), RField(p.nodes(), 1.0));
  double target = 2.0 + std::log(V);
  double mean = 0.0, spread = 0.0;
  for (double w : r.minimizer_w) mean += w / r.minimizer_w.size();
  for (double w : r.minimizer_w) spread = std::max(spread, std::abs(w - mean) / mean);
  double starts = 0.0;
  for (double v : r.start_values) starts = std::max(starts, std::abs(v - r.mu_estimate));
  return {std::abs(r.mu_estimate - target) < 1e-6 && r.euler_lagrange_residual < 1e-8 && spread < 1e-6 &&
              r.start_values.size() >= 6 && starts < 1e-6,
          "mu - (2 + log V) = " + num(r.mu_estimate - target) + ", EL " + num(r.euler_lagrange_residual) +
              ", minimizer spread " + num(spread) + ", " + std::to_string(r.start_values.size()) +
              " starts agree to " + num(starts) + "; Kahler reading mu - (1 + log V) = " +
              num(rk.mu_estimate - 1.0 - std::log(V))};
}

// 7. Coupled monotonicity of W along the perturbed run.
Outcome coupled_monotonicity() {
  const auto& rep = cached(perturbed_cfg());
  Series e = series_of(rep, "entropy");
  double worst = INFINITY;
  for (const auto& row : e.rows) worst = std::min(worst, row[5]);
  double match = rep.summaries["entropy"]["worst_match"].get<double>();
  double integrand = rep.summaries["entropy"]["min_integrand"].get<double>();
  return {worst >= -1e-8 && match < 2e-2 && integrand >= -1e-12,
          "min dW/dt " + num(worst) + " over " + std::to_string(e.rows.size()) + " checkpoints, formula match " +
              num(match) + ", min integrand " + num(integrand)};
}

// 8. Monotonicity of mu along the same run.
Outcome mu_monotonicity() {
  const auto& rep = cached(perturbed_cfg());
  Series e = series_of(rep, "entropy");
  double drop = 0.0;
  for (std::size_t k = 1; k < e.rows.size(); ++k) drop = std::max(drop, e.rows[k - 1][3] - e.rows[k][3]);
  double rise = e.rows.back()[3] - e.rows.front()[3];
  return {e.rows.size() >= 10 && drop <= 2e-8,
          std::to_string(e.rows.size()) + " checkpoints, largest drop " + num(drop) + ", total change " + num(rise)};
}

// 9. Backward heat equation: exact constant mode and positivity.
Outcome backward_heat_check() {
  FlowOptions o;
  o.t_end = 1.0;
  auto fixed = make_flow_problem(round_profile(64));
  auto tr = run_flow(fixed, RField(65, 0.0), o);
  const double c = 0.37, T = 1.0;
  auto r = backward_heat(tr, RField(65, c), T, HeatConvention::literal);
  double err = 0.0;
  for (std::size_t k = 0; k < r.t.size(); ++k)
    for (double w : r.w[k]) err = std::max(err, std::abs(w - c * std::exp(r.t[k] - T)));

  std::vector<FlowTrajectory> runs;
  runs.push_back(tr);
  RField phi(65);
  for (int j = 0; j <= 64; ++j) phi[j] = 0.05 * 0.5 * (3.0 * fixed.base.x[j] * fixed.base.x[j] - 1.0);
  runs.push_back(run_flow(fixed, phi, o));
  auto fb = make_flow_problem(football_profile(2, 3, 64));
  runs.push_back(run_flow(fb, RField(65, 0.0), o));
  double min_w = INFINITY;
  for (const auto& t : runs) {
    RField bump(65, 0.0);
    for (int j = 28; j <= 36; ++j) bump[j] = 1.0 - std::abs(j - 32) / 5.0;
    for (auto conv : {HeatConvention::literal, HeatConvention::conjugate}) {
      auto b = backward_heat(t, bump, T, conv);
      for (std::size_t k = 0; k + 1 < b.t.size(); ++k) min_w = std::min(min_w, profile_ops::min_of(b.w[k]));
    }
  }
  return {err < 1e-8 && min_w > 0.0,
          "constant mode error " + num(err) + ", min w over t < T on 3 runs x 2 conventions " + num(min_w)};
}

// 10. Positivity of bisectional curvature preserved on football and teardrop.
Outcome positivity_preservation() {
  double worst = INFINITY;
  std::string d;
  for (const RunReport* rep : {&cached(football_cfg()), &cached(teardrop_cfg(256))}) {
    Series s = series_of(*rep, "positivity");
    double m = INFINITY;
    for (const auto& row : s.rows) m = std::min(m, row[1]);
    worst = std::min(worst, m);
    d += rep->output_dir.filename().string() + " min " + num(m) + " over " + std::to_string(s.rows.size()) +
         " checkpoints; ";
  }
  return {worst > 0.0, d};
}

// 11. Convergence of the teardrop to the soliton.
Outcome soliton_convergence() {
  auto t0 = std::chrono::steady_clock::now();
  const auto& rep = cached(teardrop_cfg(256));
  double dt = seconds_since(t0);
  const auto& s = rep.summaries["positivity"];
  double res = std::max(s["soliton_einstein_final"].get<double>(), s["soliton_holo_final"].get<double>());
  double dist = s["soliton_profile_distance"].get<double>();
  std::string trend;
  for (int N : {64, 128}) {
    const auto& r = cached(teardrop_cfg(N)).summaries["positivity"];
    trend += num(std::max(r["soliton_einstein_final"].get<double>(), r["soliton_holo_final"].get<double>())) + " / ";
  }
  return {res < 1e-4 && dist < 1e-3 && dt < 300.0,
          "terminal residual " + num(res) + " (N=64/128/256: " + trend + num(res) + "), max |Psi - Psi_shot| " +
              num(dist) + ", " + num(dt) + " s at N=256"};
}

// 12. Volume ratio of small balls and non-collapsing along the runs.
Outcome volume_ratio() {
  bool ok = true;
  std::string d;
  for (const RunReport* rep : {&cached(fixed_point_cfg()), &cached(football_cfg())}) {
    const Verdict* a = verdict_of(*rep, "quotient.volume_ratio");
    const Verdict* b = verdict_of(*rep, "quotient.non_collapsing");
    ok = ok && a && b && a->pass && b->pass;
    d += rep->output_dir.filename().string() + ": " + (a ? a->detail : "missing") + ", " +
         (b ? b->detail : "missing") + "; ";
  }
  return {ok, d};
}

// 13. Null-vector condition on the Monte Carlo ensemble.
Outcome null_vector() {
  auto t0 = std::chrono::steady_clock::now();
  auto r = null_vector_test(10000, 2, 2024);
  double dt = seconds_since(t0);
  return {r.worst >= -1e-10 && r.counted > 0 && dt < 60.0,
          "worst F " + num(r.worst) + " over " + std::to_string(r.counted) + " trials (" +
              std::to_string(r.excluded_hypothesis + r.excluded_psd) + " excluded), " + num(dt) + " s"};
}

// 14. Stability along a Reeb family whose weight ratio converges.
Outcome reeb_family() {
  auto c = scenario("reeb_family", "football", 48, 5.0, {"reeb_family"});
  c.p = 2;
  c.q = 3;
  c.checkpoint_cadence = 1.0;
  c.reeb_rhos = {3.0 / 2.0, 8.0 / 5.0, 19.0 / 12.0, 65.0 / 41.0};
  c.reeb_target = std::log2(3.0);
  const auto& rep = cached(c);
  Series s = series_of(rep, "reeb_family");
  std::string d = "sup deviations";
  for (const auto& row : s.rows) d += " " + num(row[2]);
  return {rep.summaries["reeb_family"]["monotone"].get<bool>(), d};
}

// 15. Byte-identical CSV across two runs with the same seed.
Outcome determinism() {
  auto base = scenario("determinism", "football", 32, 1.0,
                       {"entropy", "positivity", "quotient", "scalar_evolution", "gradient_bounds"});
  base.p = 1;
  base.q = 3;
  base.perturbation = 0.02;
  base.checkpoint_cadence = 0.25;
  auto a = base, b = base;
  a.output_dir = (out_root() / "determinism_a").string();
  b.output_dir = (out_root() / "determinism_b").string();
  auto ra = run(a), rb = run(b);
  int files = 0, same = 0;
  for (const auto& s : ra.series) {
    ++files;
    same += slurp(ra.output_dir / (s.name + ".csv")) == slurp(rb.output_dir / (s.name + ".csv"));
  }
  bool manifest = slurp(ra.output_dir / "MANIFEST.sha256") == slurp(rb.output_dir / "MANIFEST.sha256");
  return {files > 0 && same == files && manifest,
          std::to_string(same) + "/" + std::to_string(files) + " CSV files identical, manifest " +
              (manifest ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"curvature identities on round spheres", identities},
      {"second-order convergence on Fubini-Study charts", fs_convergence},
      {"Kahler identities and Weitzenboeck formula", kahler_weitzenbock},
      {"integration by parts on periodic charts", integration_by_parts},
      {"fixed-point stationarity", stationarity},
      {"W and mu at the fixed point", fixed_point_entropy},
      {"coupled monotonicity of W", coupled_monotonicity},
      {"monotonicity of mu", mu_monotonicity},
      {"backward heat equation", backward_heat_check},
      {"positivity preservation", positivity_preservation},
      {"soliton convergence of the teardrop", soliton_convergence},
      {"volume ratio and non-collapsing", volume_ratio},
      {"null-vector condition", null_vector},
      {"Reeb-family stability", reeb_family},
      {"determinism", determinism},
  };
  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    passed += o.pass;
    std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", passed, criteria.size());
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
