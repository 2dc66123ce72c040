#include <algorithm>
#include <cmath>
#include <limits>

#include "sasaki/entropy.hpp"
#include "sasaki/flow.hpp"
#include "sasaki/models.hpp"
#include "sasaki/positivity.hpp"
#include "sasaki/quotient.hpp"
#include "sasaki/runner.hpp"
#include "sasaki/soliton.hpp"

namespace sasaki {

namespace {

constexpr double kMuTol = 1e-8;

bool has(const ScenarioConfig& c, const std::string& m) {
  return std::find(c.monitors.begin(), c.monitors.end(), m) != c.monitors.end();
}

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

struct Context {
  const ScenarioConfig& cfg;
  RunReport rep;
  std::vector<std::pair<std::string, std::string>> files;

  void verdict(const std::string& name, bool pass, const std::string& detail) {
    rep.verdicts.push_back({name, pass, detail});
  }
  void add_series(Series s) {
    files.emplace_back(s.name + ".csv", csv_text(s));
    if (!s.rows.empty() && s.columns.size() > 1) {
      std::vector<double> x;
      for (const auto& r : s.rows) x.push_back(r[0]);
      for (std::size_t c = 1; c < s.columns.size(); ++c) {
        std::vector<double> y;
        for (const auto& r : s.rows) y.push_back(r[c]);
        files.emplace_back(s.name + "_" + s.columns[c] + ".svg",
                           svg_line_plot(cfg.name + ": " + s.name + " " + s.columns[c], s.columns[0], s.columns[c], x, y));
      }
    }
    rep.series.push_back(std::move(s));
  }
};

std::string fmt(double v) { return format_number(v); }

json profile_json(const Profile& p) {
  return {{"beta_minus", p.beta_minus}, {"beta_plus", p.beta_plus}, {"slope_minus", p.slope_minus},
          {"slope_plus", p.slope_plus}, {"fiber_length", p.fiber_length}, {"N", p.N},
          {"x", p.x},                   {"psi", p.psi}};
}

std::string checkpoint_text(const ScenarioConfig& cfg, const Profile& base, const Snapshot& s,
                            const std::string& reason) {
  json j;
  j["schema"] = kCheckpointSchema;
  j["scenario"] = cfg.name;
  j["config"] = to_json(cfg);
  j["config"].erase("output_dir");
  j["reason"] = reason;
  j["base"] = profile_json(base);
  j["state"] = {{"t", s.t}, {"tau", s.tau}, {"A", s.A}, {"phi", s.phi}, {"phi_dot", s.phi_dot},
                {"psi", s.psi}, {"u", s.u}};
  return j.dump(1) + "\n";
}

Profile initial_base(const ScenarioConfig& cfg) {
  if (cfg.geometry == "round_sphere") return round_profile(cfg.N);
  return football_profile(cfg.p, cfg.q, cfg.N);
}

RField initial_potential(const Profile& base, double amp) {
  RField phi(base.nodes(), 0.0);
  if (amp != 0.0)
    for (int j = 0; j < base.nodes(); ++j) phi[j] = amp * 0.5 * (3.0 * base.x[j] * base.x[j] - 1.0);
  return phi;
}

// Integrates in segments of the checkpoint cadence so checkpoints land on exact multiples of it.
// `ckpt` receives the snapshot index of every cadence checkpoint. On a module error the last good
// state is written as a checkpoint and the error is rethrown as RunFailed.
FlowTrajectory integrate(Context& ctx, const FlowProblem& pb, std::vector<std::size_t>& ckpt) {
  const auto& cfg = ctx.cfg;
  FlowTrajectory tr;
  tr.base = pb.base;
  RField phi = initial_potential(pb.base, cfg.perturbation);
  double tau = cfg.tau0, t0 = 0.0;
  const int segments = std::max(1, static_cast<int>(std::ceil(cfg.t_end / cfg.checkpoint_cadence - 1e-9)));
  try {
    for (int k = 0; k < segments; ++k) {
      FlowOptions opt;
      double t1 = k + 1 == segments ? cfg.t_end : (k + 1) * cfg.checkpoint_cadence;
      opt.t_end = t1 - t0;
      opt.dt = cfg.dt_policy == "fixed" ? cfg.dt : 0.0;
      opt.dt_fraction = cfg.dt_fraction;
      opt.checkpoint_every = 10;
      FlowTrajectory seg = run_flow(pb, phi, opt, tau);
      for (std::size_t i = tr.snapshots.empty() ? 0 : 1; i < seg.snapshots.size(); ++i) {
        Snapshot s = seg.snapshots[i];
        s.t += t0;
        tr.snapshots.push_back(std::move(s));
      }
      tr.steps += seg.steps;
      tr.rejections += seg.rejections;
      if (ckpt.empty()) ckpt.push_back(0);
      ckpt.push_back(tr.snapshots.size() - 1);
      const auto& last = tr.snapshots.back();
      phi = last.phi;
      tau = last.tau;
      t0 = t1;
      tr.snapshots.back().t = t1;
    }
  } catch (const Error& e) {
    if (!tr.snapshots.empty()) {
      ctx.files.emplace_back("failure.ckpt.json", checkpoint_text(cfg, pb.base, tr.snapshots.back(), e.what()));
      write_artifact(ctx.rep.output_dir, "failure.ckpt.json", ctx.files.back().second);
    }
    fail(ErrorKind::RunFailed, std::string(e.what()) + " (last good state in " +
                                   (ctx.rep.output_dir / "failure.ckpt.json").string() + ")");
  }
  double umin = 0.0;
  for (const auto& sn : tr.snapshots) umin = std::min(umin, profile_ops::min_of(sn.u));
  tr.B = std::max(1.0, -umin);
  for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
    Profile p = tr.metric_at(k);
    MonitorRow m = monitor_row(p, tr.snapshots[k]);
    auto gb = gradient_bound_monitor(p, tr.snapshots[k].u, tr.B);
    m.H_max = gb.H_max;
    m.K_max = gb.K_max;
    tr.monitors.push_back(m);
  }
  return tr;
}

FlowTrajectory restrict_to(const FlowTrajectory& tr, const std::vector<std::size_t>& idx) {
  FlowTrajectory out;
  out.base = tr.base;
  out.B = tr.B;
  out.steps = tr.steps;
  out.rejections = tr.rejections;
  for (auto k : idx) {
    out.snapshots.push_back(tr.snapshots[k]);
    out.monitors.push_back(tr.monitors[k]);
  }
  return out;
}

void flow_series(Context& ctx, const FlowTrajectory& cp) {
  Series s{"flow", {"t", "Rt_min", "Rt_max", "grad_u_max", "u_min", "u_max", "A", "volume", "H_max", "K_max",
                    "diameter", "phi_max", "mass"},
           {}};
  bool finite = true;
  for (const auto& m : cp.monitors) {
    s.rows.push_back({m.t, m.Rt_min, m.Rt_max, m.grad_u_max, m.u_min, m.u_max, m.A, m.volume, m.H_max, m.K_max,
                      m.diameter, m.phi_max, m.mass});
    for (double v : s.rows.back()) finite = finite && std::isfinite(v);
  }
  ctx.verdict("flow.finite", finite, "all monitor values finite over " + std::to_string(s.rows.size()) + " checkpoints");
  double phi_max = 0.0, drift = 0.0;
  for (std::size_t r = 0; r < s.rows.size(); ++r) {
    phi_max = std::max(phi_max, s.rows[r][11]);
    for (std::size_t c = 1; c < s.columns.size(); ++c)
      drift = std::max(drift, std::abs(s.rows[r][c] - s.rows[0][c]));
  }
  ctx.rep.summaries["flow"] = {{"checkpoints", s.rows.size()}, {"steps", cp.steps},
                               {"rejections", cp.rejections}, {"B", cp.B},
                               {"phi_max", phi_max},          {"max_series_drift", drift}};
  if (ctx.cfg.geometry == "round_sphere" && ctx.cfg.perturbation == 0.0 && ctx.cfg.tau0 == 1.0) {
    ctx.verdict("flow.stationary", phi_max < 1e-10 && drift < 1e-8,
                "phi_max " + fmt(phi_max) + ", series drift " + fmt(drift));
  }
  ctx.add_series(std::move(s));
}

void gradient_series(Context& ctx, const FlowTrajectory& cp) {
  Series s{"gradient_bounds", {"t", "H_max", "K_max", "u_min", "B"}, {}};
  double H = -INFINITY, K = -INFINITY;
  for (const auto& m : cp.monitors) {
    s.rows.push_back({m.t, m.H_max, m.K_max, m.u_min, cp.B});
    H = std::max(H, m.H_max);
    K = std::max(K, m.K_max);
  }
  ctx.rep.summaries["gradient_bounds"] = {{"B", cp.B}, {"H_max", H}, {"K_max", K}};
  ctx.verdict("gradient_bounds.bounded", std::isfinite(H) && std::isfinite(K),
              "sup |grad u|^2/(u+2B) = " + fmt(H) + ", sup R/(u+2B) = " + fmt(K));
  ctx.add_series(std::move(s));
}

void entropy_series(Context& ctx, const FlowTrajectory& tr, const std::vector<std::size_t>& ckpt) {
  const auto& cfg = ctx.cfg;
  MinimizerOptions mo;
  mo.tol = kMuTol;
  mo.seed = cfg.seed;
  std::vector<MuPoint> mu;
  RField wT;
  for (auto k : ckpt) {
    const auto& s = tr.snapshots[k];
    auto r = mu_minimize(entropy_geometry(tr.metric_at(k)), s.tau, EntropyConvention::kahler, mo);
    mu.push_back({s.t, s.tau, r.mu_estimate, r.euler_lagrange_residual});
    wT = r.minimizer_w;
  }
  RField fT(wT.size());
  for (std::size_t j = 0; j < wT.size(); ++j) fT[j] = -std::log(std::max(wT[j] * wT[j], 1e-300));
  auto coupled = coupled_monotonicity_check(tr, fT, tr.snapshots.back().t);

  Series s{"entropy",
           {"t", "tau", "W", "mu", "EL_residual", "dWdt_numeric", "dWdt_formula", "soliton_term", "hessian_term"},
           {}};
  bool mono = true;
  double worst_drop = 0.0, max_el = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const CoupledRow* row = nullptr;
    for (const auto& r : coupled.rows)
      if (std::abs(r.t - mu[i].t) <= 1e-12 * std::max(1.0, mu[i].t)) row = &r;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.rows.push_back({mu[i].t, mu[i].tau, row ? row->W : nan, mu[i].mu, mu[i].el, row ? row->dWdt_numeric : nan,
                      row ? row->dWdt_formula : nan, row ? row->soliton_term : nan, row ? row->hessian_term : nan});
    max_el = std::max(max_el, mu[i].el);
    if (i > 0) {
      double drop = mu[i - 1].mu - mu[i].mu;
      worst_drop = std::max(worst_drop, drop);
      if (drop > 2.0 * kMuTol) mono = false;
    }
  }
  double min_int = INFINITY;
  for (const auto& r : coupled.rows) min_int = std::min({min_int, r.min_soliton_integrand, r.min_hessian_integrand});
  ctx.rep.summaries["entropy"] = {{"mu_initial", mu.front().mu}, {"mu_final", mu.back().mu},
                                  {"worst_mu_drop", worst_drop},  {"max_el_residual", max_el},
                                  {"worst_dWdt", finite_or_nan(coupled.worst_dWdt)},
                                  {"worst_match", coupled.worst_match}, {"min_integrand", min_int}};
  ctx.verdict("entropy.mu_nondecreasing", mono, "largest drop " + fmt(worst_drop) + " (tolerance 2e-8)");
  ctx.verdict("entropy.dWdt_nonnegative", !(coupled.worst_dWdt < -1e-8), "worst dW/dt " + fmt(coupled.worst_dWdt));
  ctx.verdict("entropy.integrands_nonnegative", min_int >= -1e-12, "smallest integrand " + fmt(min_int));
  ctx.add_series(std::move(s));
}

void positivity_series(Context& ctx, const FlowTrajectory& cp) {
  PositivityOptions po;
  po.minimizer.seed = ctx.cfg.seed;
  auto pr = positivity_monitor(cp, po);
  Series s{"positivity", {"t", "min_bisectional", "argmin_x", "soliton_einstein", "soliton_holo"}, {}};
  double min_after = INFINITY;
  for (std::size_t k = 0; k < pr.rows.size(); ++k) {
    const auto& r = pr.rows[k];
    s.rows.push_back({r.t, r.min_bisectional, r.argmin_x, r.soliton_einstein, r.soliton_holo});
    if (k > 0) min_after = std::min(min_after, r.min_bisectional);
  }
  const auto& last = pr.rows.back();
  json sum = {{"starts_nonnegative", pr.starts_nonnegative},
              {"starts_positive_somewhere", pr.starts_positive_somewhere},
              {"stays_nonnegative", pr.stays_nonnegative},
              {"first_positive_time", finite_or_nan(pr.first_positive_time)},
              {"sign_change", pr.sign_change},
              {"min_bisectional_initial", pr.rows.front().min_bisectional},
              {"min_bisectional_final", last.min_bisectional},
              {"soliton_einstein_final", last.soliton_einstein},
              {"soliton_holo_final", last.soliton_holo}};
  if (pr.starts_nonnegative)
    ctx.verdict("positivity.preserved", pr.stays_nonnegative,
                "min bisectional stays >= -" + fmt(pr.tol) + " (final " + fmt(last.min_bisectional) + ")");
  if (pr.starts_nonnegative && pr.starts_positive_somewhere)
    ctx.verdict("positivity.becomes_positive", min_after > 0.0,
                "min over t > 0 is " + fmt(min_after) + ", first positive time " + fmt(pr.first_positive_time));
  if (ctx.cfg.geometry == "football") {
    Profile pT = cp.metric_at(cp.snapshots.size() - 1);
    auto shot = soliton_shooting(pT.beta_minus, pT.beta_plus, pT.N);
    double dist = 0.0;
    for (int j = 0; j < pT.nodes(); ++j) dist = std::max(dist, std::abs(pT.psi[j] - shot.psi[j]));
    sum["soliton_profile_distance"] = dist;
    sum["soliton_alpha"] = shot.alpha;
    if (ctx.cfg.soliton_tol > 0.0) {
      double res = std::max(last.soliton_einstein, last.soliton_holo);
      ctx.verdict("positivity.soliton_residual", res < ctx.cfg.soliton_tol,
                  "terminal residual " + fmt(res) + " vs " + fmt(ctx.cfg.soliton_tol));
      ctx.verdict("positivity.soliton_profile", dist < 1e-3, "max |Psi - Psi_shot| = " + fmt(dist));
    }
  }
  ctx.rep.summaries["positivity"] = sum;
  ctx.add_series(std::move(s));
}

json quotient_json(const QuotientReport& q) {
  json rt = json::array();
  for (const auto& r : q.ratio_table) rt.push_back({{"r", r.r}, {"center_x", r.center_x}, {"ratio", r.ratio}});
  json ex = json::array();
  for (const auto& e : q.exceptional_fibers) ex.push_back({{"x", e.x}, {"length", e.length}, {"isotropy", e.isotropy}});
  return {{"kind", q.kind},
          {"l", q.fiber_length},
          {"cone_angles", {q.cone_angle_minus, q.cone_angle_plus}},
          {"diameter", q.diameter.diameter},
          {"diameter_converged", q.diameter.converged},
          {"gauss_bonnet_residual", q.gauss_bonnet.residual},
          {"volume", q.volume},
          {"exceptional_fibers", ex},
          {"ratio_table", rt}};
}

void quotient_series(Context& ctx, const FlowTrajectory& cp) {
  auto qs = quotients_of(cp);
  Series s{"quotient",
           {"t", "fiber_length", "cone_angle_minus", "cone_angle_plus", "diameter", "gauss_bonnet_residual", "volume",
            "ratio_min", "ratio_max"},
           {}};
  double worst_ratio = 0.0, worst_gb = 0.0;
  json first, last;
  for (std::size_t k = 0; k < qs.size(); ++k) {
    auto q = quotient_report(quotient_from_profile(qs[k].profile));
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : q.ratio_table) {
      lo = std::min(lo, r.ratio);
      hi = std::max(hi, r.ratio);
      worst_ratio = std::max(worst_ratio, std::abs(r.ratio - 4.0) / 4.0);
    }
    worst_gb = std::max(worst_gb, q.gauss_bonnet.residual / std::abs(q.gauss_bonnet.expected));
    s.rows.push_back({qs[k].t, q.fiber_length, q.cone_angle_minus, q.cone_angle_plus, q.diameter.diameter,
                      q.gauss_bonnet.residual, q.volume, lo, hi});
    if (k == 0) first = quotient_json(q);
    last = quotient_json(q);
  }
  const double r0 = std::min(0.4, 0.25 * s.rows.front()[4]);
  auto audit = non_collapsing_audit(qs, 100.0, r0, 3);
  bool decaying = audit.rows.size() >= 3;
  for (std::size_t k = 1; k < audit.rows.size(); ++k)
    if (!(audit.rows[k].kappa < audit.rows[k - 1].kappa)) decaying = false;
  decaying = decaying && audit.kappa_trend < 0.9;
  ctx.rep.summaries["quotient"] = {{"initial", first},
                                   {"final", last},
                                   {"worst_ratio_deviation", worst_ratio},
                                   {"worst_gauss_bonnet_relative", worst_gb},
                                   {"kappa_min", audit.kappa_min},
                                   {"kappa_trend", audit.kappa_trend},
                                   {"audit_r0", r0}};
  ctx.verdict("quotient.volume_ratio", worst_ratio < 0.02, "worst |V(r)/V(r/2) - 4|/4 = " + fmt(worst_ratio));
  ctx.verdict("quotient.gauss_bonnet", worst_gb < 1e-4, "worst relative residual " + fmt(worst_gb));
  ctx.verdict("quotient.non_collapsing", audit.kappa_min > 0.0 && !decaying,
              "kappa_min " + fmt(audit.kappa_min) + ", last/first " + fmt(audit.kappa_trend));
  ctx.add_series(std::move(s));
  Series a{"noncollapsing", {"t", "kappa", "included", "excluded"}, {}};
  for (const auto& r : audit.rows) a.rows.push_back({r.t, r.kappa, double(r.included), double(r.excluded)});
  ctx.add_series(std::move(a));
}

void scalar_series(Context& ctx, const FlowTrajectory& tr) {
  auto res = scalar_evolution_residual(tr, std::max(1, ctx.cfg.N / 8));
  auto lb = scalar_lower_bound_check(tr);
  Series s{"scalar_evolution", {"t", "max_residual", "scale"}, {}};
  double worst = 0.0;
  for (const auto& r : res) {
    s.rows.push_back({r.t, r.max_residual, r.scale});
    worst = std::max(worst, r.max_residual / std::max(1.0, r.scale));
  }
  ctx.rep.summaries["scalar_evolution"] = {
      {"worst_relative_residual", worst}, {"lower_bound_margin", lb.worst_margin}, {"lower_bound_t", lb.worst_t}};
  ctx.verdict("scalar_evolution.lower_bound", lb.worst_margin >= -1e-3,
              "min over checkpoints of R - comparison curve = " + fmt(lb.worst_margin));
  ctx.add_series(std::move(s));
}

void reeb_series(Context& ctx, const Profile& base) {
  const auto& cfg = ctx.cfg;
  auto rep = reeb_family_experiment(base.length(), cfg.reeb_rhos, cfg.reeb_target, cfg.N, cfg.t_end);
  Series s{"reeb_family", {"rho", "initial_distance", "deviation", "steps"}, {}};
  for (const auto& m : rep.members) s.rows.push_back({m.rho, m.initial_distance, m.deviation, double(m.steps)});
  ctx.rep.summaries["reeb_family"] = {{"total_length", base.length()},
                                      {"rho_limit", rep.rho_limit},
                                      {"final_deviation", rep.members.back().deviation},
                                      {"monotone", rep.monotone}};
  ctx.verdict("reeb_family.monotone", rep.monotone, "sup deviation decreases along the ratio sequence");
  ctx.add_series(std::move(s));
}

void run_chart(Context& ctx) {
  const auto& cfg = ctx.cfg;
  auto chart = torus_chart(cfg.n, cfg.N, cfg.torus_eps);
  auto m = metric_from_chart(chart);
  auto c = curvature(m);
  if (has(cfg, "entropy")) {
    MinimizerOptions mo;
    mo.tol = kMuTol;
    mo.seed = cfg.seed;
    auto r = mu_minimize(entropy_geometry(m, c), cfg.tau0, EntropyConvention::kahler, mo);
    Series s{"chart_entropy", {"t", "tau", "mu", "EL_residual"}, {{0.0, cfg.tau0, r.mu_estimate, r.euler_lagrange_residual}}};
    ctx.rep.summaries["entropy"] = {{"mu", r.mu_estimate}, {"el_residual", r.euler_lagrange_residual},
                                    {"start_values", r.start_values}};
    ctx.verdict("entropy.minimizer_converged", r.euler_lagrange_residual < 1e-6,
                "EL residual " + fmt(r.euler_lagrange_residual));
    ctx.add_series(std::move(s));
  }
  if (has(cfg, "positivity")) {
    auto b = min_bisectional(m, c, 32, 5);
    Series s{"chart_positivity", {"t", "min_bisectional", "argmin_point"}, {{0.0, b.value, double(b.point)}}};
    ctx.rep.summaries["positivity"] = {{"min_bisectional", b.value}, {"argmin_point", b.point}};
    ctx.verdict("positivity.finite", std::isfinite(b.value), "min bisectional " + fmt(b.value));
    ctx.add_series(std::move(s));
  }
}

void run_flow_scenario(Context& ctx) {
  const auto& cfg = ctx.cfg;
  FlowProblem pb = make_flow_problem(initial_base(cfg));
  std::vector<std::size_t> ckpt;
  FlowTrajectory tr = integrate(ctx, pb, ckpt);
  FlowTrajectory cp = restrict_to(tr, ckpt);
  flow_series(ctx, cp);
  ctx.files.emplace_back("final.ckpt.json", checkpoint_text(cfg, pb.base, tr.snapshots.back(), "final"));
  if (has(cfg, "gradient_bounds")) gradient_series(ctx, cp);
  if (has(cfg, "entropy")) entropy_series(ctx, tr, ckpt);
  if (has(cfg, "positivity")) positivity_series(ctx, cp);
  if (has(cfg, "quotient")) quotient_series(ctx, cp);
  if (has(cfg, "scalar_evolution")) scalar_series(ctx, tr);
  if (has(cfg, "reeb_family")) reeb_series(ctx, pb.base);
}

}  // namespace

RunReport run(const ScenarioConfig& cfg) {
  validate(cfg);
  Context ctx{cfg, {}, {}};
  ctx.rep.output_dir = cfg.output_dir;
  try {
    if (cfg.geometry == "chart_torus")
      run_chart(ctx);
    else
      run_flow_scenario(ctx);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::RunFailed || e.kind() == ErrorKind::ConfigInvalid) throw;
    std::string where;
    for (const auto& [file, content] : ctx.files)
      if (file.ends_with(".ckpt.json")) {
        write_artifact(ctx.rep.output_dir, file, content);
        where = " (last state in " + (ctx.rep.output_dir / file).string() + ")";
      }
    fail(ErrorKind::RunFailed, e.what() + where);
  }
  for (const auto& [file, content] : ctx.files) ctx.rep.manifest.push_back(write_artifact(ctx.rep.output_dir, file, content));
  ctx.rep.status = std::all_of(ctx.rep.verdicts.begin(), ctx.rep.verdicts.end(), [](const Verdict& v) { return v.pass; })
                       ? "pass"
                       : "fail";
  std::string sums;
  for (const auto& m : ctx.rep.manifest) sums += m.sha256 + "  " + m.file + "\n";
  write_artifact(ctx.rep.output_dir, "report.json", report_json(cfg, ctx.rep).dump(2) + "\n");
  write_artifact(ctx.rep.output_dir, "MANIFEST.sha256", sums);
  return ctx.rep;
}

}  // namespace sasaki
