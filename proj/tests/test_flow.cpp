#include <gtest/gtest.h>

#include "sasaki/flow.hpp"
#include "sasaki/soliton.hpp"

using namespace sasaki;

namespace {

RField p2_bump(const Profile& p, double eps) {
  RField phi(p.nodes());
  for (int j = 0; j < p.nodes(); ++j) phi[j] = eps * 0.5 * (3.0 * p.x[j] * p.x[j] - 1.0);
  return phi;
}

double sup_diff(const RField& a, const RField& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::RunFailed;
}

}  // namespace

TEST(Profiles, RoundVolumeAndCurvature) {
  auto p = round_profile(64);
  EXPECT_NEAR(p.volume(), 32.0 * kPi * kPi, 1e-12);
  for (double R : profile_ops::scalar_curvature(p)) EXPECT_NEAR(R, 2.0, 1e-10);
}

TEST(Profiles, GuilleminSlopesGiveConeAngles) {
  auto p = football_profile(2, 3, 256);
  auto d = profile_ops::d1(p.psi, p.h);
  EXPECT_NEAR(d.front(), p.slope_minus, 2e-3);
  EXPECT_NEAR(-d.back(), p.slope_plus, 2e-3);
  EXPECT_NEAR(p.slope_minus, 1.0, 1e-15);
  EXPECT_NEAR(p.slope_plus, 2.0 / 3.0, 1e-15);
}

TEST(Profiles, WeightsReducedByGcd) {
  auto a = football_profile(2, 3, 64), b = football_profile(20, 30, 64);
  EXPECT_LT(sup_diff(a.psi, b.psi), 1e-15);
  EXPECT_EQ(a.fiber_length, b.fiber_length);
}

TEST(Profiles, DHomothetyRestoresCompatibility) {
  auto leaf = unit_sphere_leaf_profile(64);
  auto scaled = d_homothetic(leaf, 4.0);
  auto round = round_profile(64);
  EXPECT_LT(sup_diff(scaled.psi, round.psi), 1e-14);
  EXPECT_NEAR(scaled.fiber_length, round.fiber_length, 1e-12);
}

TEST(RicciPotentialForm, ZeroAtFixedPoint) {
  auto F = compute_F(round_profile(128));
  EXPECT_LT(profile_ops::max_abs(F), 1e-12);
}

TEST(RicciPotentialForm, IncompatibleClassOnUnitLeaf) {
  EXPECT_EQ(kind_of([] { compute_F(unit_sphere_leaf_profile(64)); }), ErrorKind::IncompatibleClass);
  EXPECT_NO_THROW(compute_F(d_homothetic(unit_sphere_leaf_profile(64), 4.0)));
}

TEST(RicciPotentialForm, MatchesQuadratureAndClosedForm) {
  // F' = -(Psi0' + 2x)/Psi0 and F = -log Psi0 + 2U - 2xU' + c, compared on the interior.
  std::vector<double> errs;
  for (int N : {128, 256}) {
    auto p = football_profile(1, 3, N);
    const double am = 1.0 / p.beta_minus, ap = 1.0 / p.beta_plus;
    RField F = compute_F(p);
    RField closed(p.nodes());
    for (int j = 1; j < N; ++j) {
      double x = p.x[j];
      closed[j] = -std::log(p.psi[j]) + 2.0 * guillemin_potential(x, am, ap) - 2.0 * x * guillemin_potential_d1(x, am, ap);
    }
    // quadrature of F' by Simpson on the midpoint-refined interval
    RField quad(p.nodes(), 0.0);
    auto dF = [&](double x) {
      double e = 1e-6;
      double ps = guillemin_psi(x, am, ap);
      double dps = (guillemin_psi(x + e, am, ap) - guillemin_psi(x - e, am, ap)) / (2 * e);
      return -(dps + 2.0 * x) / ps;
    };
    for (int j = N / 8 + 1; j <= 7 * N / 8; ++j) {
      double a = p.x[j - 1], b = p.x[j];
      quad[j] = quad[j - 1] + (b - a) / 6.0 * (dF(a) + 4.0 * dF(0.5 * (a + b)) + dF(b));
    }
    const int j0 = N / 8;
    double err_closed = 0.0, err_quad = 0.0;
    for (int j = j0; j <= 7 * N / 8; ++j) {
      err_closed = std::max(err_closed, std::abs((F[j] - F[j0]) - (closed[j] - closed[j0])));
      err_quad = std::max(err_quad, std::abs((F[j] - F[j0]) - (quad[j] - quad[j0])));
    }
    EXPECT_LT(err_closed, 1e-3) << N;
    EXPECT_LT(std::abs(err_closed - err_quad), 1e-8) << N;
    errs.push_back(err_closed);
  }
  EXPECT_GT(errs[0] / errs[1], 3.2);
}

TEST(Flow, FixedPointStationary) {
  auto pb = make_flow_problem(round_profile(64));
  FlowOptions o;
  o.t_end = 20.0;
  o.checkpoint_every = 2000;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  for (const auto& s : tr.snapshots) EXPECT_LT(profile_ops::max_abs(s.phi), 1e-10);
  const auto& m0 = tr.monitors.front();
  for (const auto& m : tr.monitors) {
    EXPECT_NEAR(m.Rt_min, m0.Rt_min, 1e-8);
    EXPECT_NEAR(m.Rt_max, m0.Rt_max, 1e-8);
    EXPECT_NEAR(m.u_min, m0.u_min, 1e-8);
    EXPECT_NEAR(m.A, m0.A, 1e-8);
    EXPECT_NEAR(m.H_max, m0.H_max, 1e-8);
    EXPECT_NEAR(m.K_max, m0.K_max, 1e-8);
  }
}

TEST(Flow, LinearizedModeDecaysAtRateTwo) {
  auto pb = make_flow_problem(round_profile(64));
  FlowOptions o;
  o.t_end = 1.0;
  o.checkpoint_every = 1 << 30;
  auto tr = run_flow(pb, p2_bump(pb.base, 1e-5), o);
  double a0 = profile_ops::max_abs(tr.snapshots.front().phi), a1 = profile_ops::max_abs(tr.snapshots.back().phi);
  double rate = -std::log(a1 / a0);
  EXPECT_NEAR(rate, 2.0, 0.1);
}

TEST(Flow, StepAboveBoundRejected) {
  auto pb = make_flow_problem(round_profile(128));
  auto s = make_state(pb, RField(pb.base.nodes(), 0.0));
  double bound = stable_dt(s.metric);
  try {
    step(pb, s, 2.0 * bound);
    FAIL() << "expected rejection";
  } catch (const StepRejectedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepRejected);
    EXPECT_NEAR(e.suggested_dt, bound, 1e-15);
  }
  EXPECT_NO_THROW(step(pb, s, bound));
}

TEST(Flow, RunAdoptsSuggestedStep) {
  auto pb = make_flow_problem(round_profile(32));
  FlowOptions o;
  o.t_end = 0.05;
  o.dt = 1.0;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  EXPECT_GE(tr.rejections, 1);
  EXPECT_NEAR(tr.snapshots.back().t, 0.05, 1e-15);
}

TEST(Flow, NonPositiveEndTimeRejected) {
  auto pb = make_flow_problem(round_profile(32));
  FlowOptions o;
  o.t_end = 0.0;
  EXPECT_EQ(kind_of([&] { run_flow(pb, RField(pb.base.nodes(), 0.0), o); }), ErrorKind::NonPositiveParameter);
}

TEST(Flow, DegenerateMetricDetected) {
  auto pb = make_flow_problem(round_profile(32));
  RField phi(pb.base.nodes());
  for (int j = 0; j < pb.base.nodes(); ++j) phi[j] = 5.0 * pb.base.x[j] * pb.base.x[j];
  EXPECT_EQ(kind_of([&] { metric_of(pb, phi); }), ErrorKind::MetricDegenerated);
}

TEST(RicciPotential, NormalizedAndLogVolumeAtFixedPoint) {
  auto p = round_profile(128);
  auto r = ricci_potential(p);
  EXPECT_NEAR(r.mass, 1.0, 1e-12);
  const double lv = std::log(p.volume());
  for (double v : r.u) EXPECT_NEAR(v, lv, 1e-10);
  EXPECT_NEAR(r.A, -lv, 1e-10);
}

TEST(RicciPotential, DualRouteThroughVelocity) {
  // u and the flow velocity differ by a constant on any evolved metric.
  std::vector<double> errs;
  for (int N : {64, 128}) {
    auto pb = make_flow_problem(football_profile(1, 3, N));
    FlowOptions o;
    o.t_end = 0.25;
    o.checkpoint_every = 1 << 30;
    auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
    const auto& s = tr.snapshots.back();
    RField d(s.u.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = s.u[j] - s.phi_dot[j];
    double spread = profile_ops::max_of(d) - profile_ops::min_of(d);
    errs.push_back(spread);
  }
  EXPECT_LT(errs[1], 5e-3);
  EXPECT_GT(errs[0] / errs[1], 3.0);
}

TEST(RicciPotential, MassAndLowerBoundAlongRun) {
  auto pb = make_flow_problem(football_profile(2, 3, 64));
  FlowOptions o;
  o.t_end = 2.0;
  o.checkpoint_every = 200;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  for (const auto& m : tr.monitors) {
    EXPECT_NEAR(m.mass, 1.0, 1e-8);
    EXPECT_GE(m.A, -m.volume / std::exp(1.0));
    EXPECT_NEAR(m.volume, tr.monitors.front().volume, 1e-6 * m.volume);
  }
}

TEST(EvolutionResiduals, TooFewCheckpoints) {
  auto pb = make_flow_problem(round_profile(32));
  FlowOptions o;
  o.t_end = 0.01;
  o.checkpoint_every = 1 << 30;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  ASSERT_EQ(tr.snapshots.size(), 2u);
  EXPECT_EQ(kind_of([&] { ricci_potential_residual(tr); }), ErrorKind::InsufficientCheckpoints);
  EXPECT_EQ(kind_of([&] { scalar_evolution_residual(tr); }), ErrorKind::InsufficientCheckpoints);
}

TEST(EvolutionResiduals, VanishAtFixedPoint) {
  auto pb = make_flow_problem(round_profile(64));
  FlowOptions o;
  o.t_end = 0.05;
  o.checkpoint_every = 50;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  for (const auto& r : ricci_potential_residual(tr)) EXPECT_LT(r.max_residual, 1e-9);
  for (const auto& r : scalar_evolution_residual(tr)) EXPECT_LT(r.max_residual, 1e-8);
}

TEST(EvolutionResiduals, ConvergeUnderRefinement) {
  std::vector<double> ru, rR;
  for (int N : {32, 64}) {
    auto pb = make_flow_problem(round_profile(N));
    FlowOptions o;
    o.t_end = 0.2;
    o.checkpoint_every = 10;
    auto tr = run_flow(pb, p2_bump(pb.base, 0.05), o);
    double a = 0.0, b = 0.0;
    const int margin = N / 8;
    for (const auto& r : ricci_potential_residual(tr, margin)) a = std::max(a, r.max_residual);
    for (const auto& r : scalar_evolution_residual(tr, margin)) b = std::max(b, r.max_residual);
    ru.push_back(a);
    rR.push_back(b);
  }
  EXPECT_GT(ru[0] / ru[1], 3.0);
  EXPECT_GT(rR[0] / rR[1], 3.0);
}

TEST(ScalarLowerBound, ComparisonCurve) {
  EXPECT_DOUBLE_EQ(scalar_lower_curve(2.0, 5.0), 2.0);
  EXPECT_NEAR(scalar_lower_curve(1.0, std::log(2.0)), 1.0 / (0.5 + 0.5 * 2.0), 1e-15);
  EXPECT_EQ(scalar_lower_curve(0.0, 3.0), 0.0);
  EXPECT_TRUE(std::isinf(scalar_lower_curve(4.0, 10.0)));
  auto pb = make_flow_problem(football_profile(1, 3, 64));
  FlowOptions o;
  o.t_end = 3.0;
  o.checkpoint_every = 500;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  EXPECT_GE(scalar_lower_bound_check(tr).worst_margin, -1e-3);
}

TEST(GradientBounds, ConstantFieldArithmetic) {
  // normalized volume: u = 0, H = 0, K = R/(2B) = 1/B
  auto p = round_profile(64);
  p.fiber_length = 1.0 / p.area();
  auto r = ricci_potential(p);
  EXPECT_LT(profile_ops::max_abs(r.u), 1e-12);
  for (double B : {1.0, 2.5}) {
    auto b = gradient_bound_monitor(p, r.u, B);
    EXPECT_NEAR(b.H_max, 0.0, 1e-20);
    EXPECT_NEAR(b.K_max, 1.0 / B, 1e-9);
  }
}

TEST(GradientBounds, LowerBoundViolated) {
  auto p = round_profile(32);
  RField u(p.nodes(), -2.0);
  EXPECT_EQ(kind_of([&] { gradient_bound_monitor(p, u, 1.0); }), ErrorKind::LowerBoundViolated);
}

TEST(GradientBounds, BoundedAlongRun) {
  auto pb = make_flow_problem(round_profile(64));
  FlowOptions o;
  o.t_end = 5.0;
  o.checkpoint_every = 500;
  auto tr = run_flow(pb, p2_bump(pb.base, 0.1), o);
  double H0 = tr.monitors.front().H_max, K0 = tr.monitors.front().K_max;
  for (const auto& m : tr.monitors) {
    EXPECT_LE(m.H_max, 2.0 * H0 + 1e-12);
    EXPECT_LE(m.K_max, 2.0 * K0);
  }
}

TEST(TauEvolution, ClosedForm) {
  EXPECT_DOUBLE_EQ(tau_evolve(1.0, 7.0), 1.0);
  EXPECT_NEAR(tau_evolve(2.0, std::log(2.0)), 3.0, 1e-14);
  EXPECT_GT(tau_evolve(0.5, 0.69), 0.0);
  EXPECT_EQ(kind_of([] { tau_evolve(0.5, std::log(2.0) + 1e-9); }), ErrorKind::NonPositiveTau);
}

TEST(Soliton, ClosedFormMatchesShooting) {
  for (auto [p, q] : {std::pair{1, 3}, std::pair{2, 3}, std::pair{1, 2}}) {
    auto base = football_profile(p, q, 128);
    auto a = soliton_closed_form(base.beta_minus, base.beta_plus, 128);
    auto b = soliton_shooting(base.beta_minus, base.beta_plus, 128);
    EXPECT_NEAR(a.alpha, b.alpha, 1e-10);
    EXPECT_LT(sup_diff(a.psi, b.psi), 1e-9);
  }
  auto r = soliton_closed_form(1.0, 1.0, 32);
  EXPECT_EQ(r.alpha, 0.0);
  for (int j = 0; j < 33; ++j) EXPECT_NEAR(r.psi[j], 1.0 - r.x[j] * r.x[j], 1e-14);
}

TEST(Soliton, FootballFlowConverges) {
  auto pb = make_flow_problem(football_profile(2, 3, 64));
  FlowOptions o;
  o.t_end = 15.0;
  o.checkpoint_every = 1 << 30;
  auto tr = run_flow(pb, RField(pb.base.nodes(), 0.0), o);
  auto sol = soliton_closed_form(pb.base.beta_minus, pb.base.beta_plus, 64);
  EXPECT_LT(sup_diff(tr.snapshots.back().psi, sol.psi), 1e-3);
  EXPECT_GT(tr.monitors.back().Rt_min, 0.0);
}

TEST(ReebFamily, IdenticalAndRelabelled) {
  auto rep = reeb_family_experiment(5.0 / 6.0, {1.5}, 1.5, 32, 0.5);
  EXPECT_EQ(rep.members[0].deviation, 0.0);
  auto a = make_flow_problem(football_profile(2, 3, 32));
  auto b = make_flow_problem(football_profile(20, 30, 32));
  FlowOptions o;
  o.t_end = 0.5;
  auto ta = run_flow(a, RField(33, 0.0), o), tb = run_flow(b, RField(33, 0.0), o);
  EXPECT_LT(sup_diff(ta.snapshots.back().psi, tb.snapshots.back().psi), 1e-10);
}

TEST(ReebFamily, ConvergentsShrinkDeviation) {
  const double target = std::log2(3.0);
  auto rep = reeb_family_experiment(5.0 / 6.0, {3.0 / 2.0, 8.0 / 5.0, 19.0 / 12.0, 65.0 / 41.0}, target, 48, 2.0);
  EXPECT_TRUE(rep.monotone);
  for (const auto& m : rep.members) EXPECT_LE(m.deviation, 10.0 * m.initial_distance);
  EXPECT_LT(rep.members.back().deviation, 1e-3);
}
