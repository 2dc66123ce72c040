#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "sasaki/profile.hpp"

namespace sasaki {

// Flow in moment coordinates. The symplectic potential of g(t) is U0 - phi/2, so
//   Psi = Psi0 / (1 - Psi0 phi''/2),
//   d phi/dt = log(Psi/Psi0) + phi - x phi' - F,
// which is the potential flow d phi/dt = log det(g0 + dd^c phi)/det g0 + phi - F read at fixed x.
// Affine functions of x are Killing potentials; they are projected out of phi after every step.

struct FlowProblem {
  Profile base;
  RField F;
};

// Conservative solve of (Psi0 F')' = -(Psi0'' + 2): i ddbar F = rho - (1/2) d eta traced. Mean-zero gauge.
inline RField compute_F(const Profile& base, double tol = 1e-6) {
  using namespace profile_ops;
  auto s = integrate_flux(base, -2.0, -1.0, base.slope_minus);
  const double scale = 2.0 * base.length();
  if (std::abs(s.end_flux) > tol * scale)
    fail(ErrorKind::IncompatibleClass, "transverse class is not the normalized one; solvability residual " +
                                           std::to_string(std::abs(s.end_flux) / scale));
  for (double v : s.u)
    if (!std::isfinite(v)) fail(ErrorKind::SolverDiverged, "background potential is not finite");
  RField w = volume_weights(base);
  double mean = integrate(w, s.u) / base.volume();
  for (auto& v : s.u) v -= mean;
  return s.u;
}

inline FlowProblem make_flow_problem(const Profile& base) { return FlowProblem{base, compute_F(base)}; }

// Current profile for a potential phi; MetricDegenerated when positivity is lost.
inline Profile metric_of(const FlowProblem& pb, const RField& phi) {
  Profile p = pb.base;
  RField dd = profile_ops::d2(phi, p.h);
  for (int j = 0; j < p.nodes(); ++j) {
    double den = 1.0 - 0.5 * pb.base.psi[j] * dd[j];
    if (!(den > 0.0) || !std::isfinite(den))
      fail(ErrorKind::MetricDegenerated, "g0 + dd^c phi lost positivity at node " + std::to_string(j));
    p.psi[j] = pb.base.psi[j] / den;
  }
  return p;
}

inline RField flow_rhs(const FlowProblem& pb, const RField& phi) {
  const Profile& b = pb.base;
  RField dd = profile_ops::d2(phi, b.h), d = profile_ops::d1(phi, b.h), out(b.nodes());
  for (int j = 0; j < b.nodes(); ++j) {
    double den = 1.0 - 0.5 * b.psi[j] * dd[j];
    if (!(den > 0.0) || !std::isfinite(den))
      fail(ErrorKind::MetricDegenerated, "g0 + dd^c phi lost positivity at node " + std::to_string(j));
    out[j] = -std::log(den) + phi[j] - b.x[j] * d[j] - pb.F[j];
  }
  return out;
}

// Parabolic bound: 0.2 h^2 / max g^{xx}.
inline double stable_dt(const Profile& current, double fraction = 0.2) {
  return fraction * current.h * current.h / profile_ops::max_of(current.psi);
}

struct RicciPotential {
  RField u;
  double A = 0.0;
  double mass = 0.0;  // integral of e^{-u} after normalization
  int newton_iterations = 0;
};

// u with i ddbar u = g - Ric, i.e. (Psi u')' = 2 + Psi'', normalized so that the e^{-u} mass is 1.
inline RicciPotential ricci_potential(const Profile& p) {
  using namespace profile_ops;
  auto s = integrate_flux(p, 2.0, 1.0, p.slope_minus);
  RField w = volume_weights(p);
  RicciPotential r;
  r.u = std::move(s.u);
  for (double v : r.u)
    if (!std::isfinite(v)) fail(ErrorKind::SolverDiverged, "Ricci potential is not finite");
  // Newton on the additive constant: log mass(c) = 0, d/dc log mass = -1.
  const double umin = min_of(r.u);
  double tail = 0.0;
  for (int j = 0; j < p.nodes(); ++j) tail += w[j] * std::exp(-(r.u[j] - umin));
  const double log_tail = std::log(tail);
  double c = 0.0;
  for (int it = 0; it < 20; ++it) {
    double g = log_tail - (umin + c);
    c += g;
    r.newton_iterations = it + 1;
    if (std::abs(g) <= 1e-15 * (1.0 + std::abs(c))) break;
  }
  for (auto& v : r.u) v += c;
  r.mass = 0.0;
  double iue = 0.0;
  for (int j = 0; j < p.nodes(); ++j) {
    double e = std::exp(-r.u[j]);
    r.mass += w[j] * e;
    iue += w[j] * r.u[j] * e;
  }
  r.A = -iue;
  return r;
}

struct FlowState {
  double t = 0.0;
  RField phi;
  RField phi_dot;  // unprojected velocity; moves moment coordinates by x' = Psi phi_dot' / 2
  Profile metric;
  RField u;
  double A = 0.0;
  double tau = 1.0;
  double volume = 0.0;
  double mass = 0.0;
};

inline FlowState make_state(const FlowProblem& pb, RField phi, double t = 0.0, double tau = 1.0) {
  FlowState s;
  s.t = t;
  s.tau = tau;
  profile_ops::remove_affine(pb.base, phi);
  s.phi = std::move(phi);
  s.metric = metric_of(pb, s.phi);
  s.phi_dot = flow_rhs(pb, s.phi);
  auto r = ricci_potential(s.metric);
  s.u = std::move(r.u);
  s.A = r.A;
  s.mass = r.mass;
  s.volume = s.metric.volume();
  return s;
}

// One RK4 step. StepRejected if dt exceeds the parabolic bound of the current metric.
inline FlowState step(const FlowProblem& pb, const FlowState& s, double dt, double fraction = 0.2) {
  const double bound = stable_dt(s.metric, fraction);
  if (dt > bound * (1.0 + 1e-12))
    throw StepRejectedError("dt " + std::to_string(dt) + " exceeds the parabolic bound " + std::to_string(bound),
                            bound);
  const int n = pb.base.nodes();
  auto axpy = [n](const RField& a, double c, const RField& b) {
    RField o(n);
    for (int j = 0; j < n; ++j) o[j] = a[j] + c * b[j];
    return o;
  };
  const RField& k1 = s.phi_dot;
  RField k2 = flow_rhs(pb, axpy(s.phi, 0.5 * dt, k1));
  RField k3 = flow_rhs(pb, axpy(s.phi, 0.5 * dt, k2));
  RField k4 = flow_rhs(pb, axpy(s.phi, dt, k3));
  RField phi(n);
  for (int j = 0; j < n; ++j) phi[j] = s.phi[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  return make_state(pb, std::move(phi), s.t + dt, (s.tau - 1.0) * std::exp(dt) + 1.0);
}

// Perelman-type time parameter: d tau/dt = tau - 1.
inline double tau_evolve(double tau0, double t) {
  double v = (tau0 - 1.0) * std::exp(t) + 1.0;
  if (!(tau0 > 0.0) || !(v > 0.0)) fail(ErrorKind::NonPositiveTau, "tau leaves (0, inf) by t = " + std::to_string(t));
  return v;
}

struct Snapshot {
  double t = 0.0;
  double tau = 1.0;
  RField phi;
  RField phi_dot;
  RField psi;
  RField u;
  double A = 0.0;
};

struct MonitorRow {
  double t = 0.0;
  double Rt_min = 0.0, Rt_max = 0.0;
  double grad_u_max = 0.0;
  double u_min = 0.0, u_max = 0.0;
  double A = 0.0;
  double volume = 0.0;
  double H_max = 0.0, K_max = 0.0;
  double diameter = 0.0;
  double phi_max = 0.0;
  double mass = 0.0;
};

struct FlowTrajectory {
  Profile base;
  std::vector<Snapshot> snapshots;
  std::vector<MonitorRow> monitors;
  double B = 1.0;
  int steps = 0;
  int rejections = 0;

  Profile metric_at(std::size_t k) const {
    Profile p = base;
    p.psi = snapshots[k].psi;
    return p;
  }
};

struct FlowOptions {
  double t_end = 1.0;
  double dt = 0.0;          // 0: parabolic policy
  double dt_fraction = 0.2;
  int checkpoint_every = 10;  // steps between stored snapshots
  int max_halvings = 8;
  std::function<void(const FlowState&)> on_checkpoint;
};

inline Snapshot snapshot_of(const FlowState& s) {
  return Snapshot{s.t, s.tau, s.phi, s.phi_dot, s.metric.psi, s.u, s.A};
}

struct GradientBounds {
  double H_max = 0.0;
  double K_max = 0.0;
};

// max |grad u|^2 / (u + 2B) and max R / (u + 2B), Riemannian norms.
inline GradientBounds gradient_bound_monitor(const Profile& p, const RField& u, double B) {
  using namespace profile_ops;
  RField g2 = grad_norm2(p, u), R = scalar_curvature(p);
  GradientBounds b{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int j = 0; j < p.nodes(); ++j) {
    double d = u[j] + 2.0 * B;
    if (!(d > 0.0)) fail(ErrorKind::LowerBoundViolated, "u + 2B <= 0 at node " + std::to_string(j));
    b.H_max = std::max(b.H_max, g2[j] / d);
    b.K_max = std::max(b.K_max, R[j] / d);
  }
  return b;
}

inline MonitorRow monitor_row(const Profile& p, const Snapshot& s) {
  using namespace profile_ops;
  MonitorRow m;
  m.t = s.t;
  RField R = scalar_curvature(p);
  m.Rt_min = min_of(R);
  m.Rt_max = max_of(R);
  RField g2 = grad_norm2(p, s.u);
  m.grad_u_max = std::sqrt(max_of(g2));
  m.u_min = min_of(s.u);
  m.u_max = max_of(s.u);
  m.A = s.A;
  m.volume = p.volume();
  m.diameter = meridian_length(p);
  m.phi_max = max_abs(s.phi);
  RField w = volume_weights(p);
  m.mass = 0.0;
  for (int j = 0; j < p.nodes(); ++j) m.mass += w[j] * std::exp(-s.u[j]);
  return m;
}

// Integrates to t_end, storing snapshots every `checkpoint_every` steps and at both ends.
inline FlowTrajectory run_flow(const FlowProblem& pb, const RField& phi0, const FlowOptions& opt, double tau0 = 1.0) {
  if (!(opt.t_end > 0.0)) fail(ErrorKind::NonPositiveParameter, "t_end must be positive");
  FlowTrajectory tr;
  tr.base = pb.base;
  FlowState s = make_state(pb, phi0, 0.0, tau0);
  tr.snapshots.push_back(snapshot_of(s));
  if (opt.on_checkpoint) opt.on_checkpoint(s);
  double dt = opt.dt > 0.0 ? opt.dt : stable_dt(s.metric, opt.dt_fraction);
  int since = 0;
  // Splits the final stretch evenly so no step is much shorter than dt.
  auto plan = [&](double dt_now, bool& last) {
    double rem = opt.t_end - s.t;
    last = rem <= dt_now;
    if (last) return rem;
    if (rem < 2.0 * dt_now) return 0.5 * rem;
    return dt_now;
  };
  while (s.t < opt.t_end) {
    bool last = false;
    double h = plan(dt, last);
    int halvings = 0;
    for (;;) {
      try {
        s = step(pb, s, h, opt.dt_fraction);
        break;
      } catch (const StepRejectedError& e) {
        dt = e.suggested_dt;
        h = plan(dt, last);
        ++tr.rejections;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::MetricDegenerated || halvings >= opt.max_halvings) throw;
        ++halvings;
        h *= 0.5;
        last = false;
        ++tr.rejections;
      }
    }
    if (last) s.t = opt.t_end;
    ++tr.steps;
    ++since;
    if (since >= opt.checkpoint_every || last) {
      tr.snapshots.push_back(snapshot_of(s));
      if (opt.on_checkpoint) opt.on_checkpoint(s);
      since = 0;
    }
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

// Velocity of moment coordinates of material points.
inline RField frame_velocity(const Profile& p, const RField& phi_dot) {
  RField d = profile_ops::d1(phi_dot, p.h), v(p.nodes());
  for (int j = 0; j < p.nodes(); ++j) v[j] = 0.5 * p.psi[j] * d[j];
  return v;
}

// Material time derivative of a field sampled at three checkpoints (k-1, k, k+1), evaluated at k.
inline RField material_derivative(const FlowTrajectory& tr, std::size_t k,
                                  const std::function<RField(std::size_t)>& field) {
  const auto& s0 = tr.snapshots[k - 1];
  const auto& s1 = tr.snapshots[k];
  const auto& s2 = tr.snapshots[k + 1];
  double h0 = s1.t - s0.t, h1 = s2.t - s1.t;
  RField f0 = field(k - 1), f1 = field(k), f2 = field(k + 1);
  Profile p = tr.metric_at(k);
  RField vel = frame_velocity(p, s1.phi_dot), df = profile_ops::d1(f1, p.h), out(f1.size());
  for (std::size_t j = 0; j < f1.size(); ++j) {
    double dt = -h1 / (h0 * (h0 + h1)) * f0[j] + (h1 - h0) / (h0 * h1) * f1[j] + h0 / (h1 * (h0 + h1)) * f2[j];
    out[j] = dt + df[j] * vel[j];
  }
  return out;
}

struct EvolutionResidual {
  double t = 0.0;
  double max_residual = 0.0;
  double scale = 0.0;
};

// du/dt - (Delta u + u + A) with the complex Laplacian Delta = (1/2) Delta_Riemannian.
inline std::vector<EvolutionResidual> ricci_potential_residual(const FlowTrajectory& tr, int margin = 0) {
  if (tr.snapshots.size() < 3) fail(ErrorKind::InsufficientCheckpoints, "need at least three checkpoints");
  std::vector<EvolutionResidual> out;
  for (std::size_t k = 1; k + 1 < tr.snapshots.size(); ++k) {
    Profile p = tr.metric_at(k);
    const auto& s = tr.snapshots[k];
    RField ut = material_derivative(tr, k, [&](std::size_t i) { return tr.snapshots[i].u; });
    RField lap = profile_ops::laplacian(p, s.u);
    EvolutionResidual r;
    r.t = s.t;
    for (int j = margin; j < p.nodes() - margin; ++j) {
      double rhs = 0.5 * lap[j] + s.u[j] + s.A;
      r.max_residual = std::max(r.max_residual, std::abs(ut[j] - rhs));
      r.scale = std::max(r.scale, std::abs(ut[j]));
    }
    out.push_back(r);
  }
  return out;
}

// dR/dt - (Delta R - R + |Ric|^2); R and |Ric|^2 Riemannian, |Ric|^2 = R^2/2 on surfaces.
inline std::vector<EvolutionResidual> scalar_evolution_residual(const FlowTrajectory& tr, int margin = 0) {
  if (tr.snapshots.size() < 3) fail(ErrorKind::InsufficientCheckpoints, "need at least three checkpoints");
  std::vector<EvolutionResidual> out;
  auto R_at = [&](std::size_t i) { return profile_ops::scalar_curvature(tr.metric_at(i)); };
  for (std::size_t k = 1; k + 1 < tr.snapshots.size(); ++k) {
    Profile p = tr.metric_at(k);
    RField R = R_at(k);
    RField Rt = material_derivative(tr, k, R_at);
    RField lap = profile_ops::laplacian(p, R);
    EvolutionResidual r;
    r.t = tr.snapshots[k].t;
    for (int j = margin; j < p.nodes() - margin; ++j) {
      double rhs = 0.5 * lap[j] - R[j] + 0.5 * R[j] * R[j];
      r.max_residual = std::max(r.max_residual, std::abs(Rt[j] - rhs));
      r.scale = std::max(r.scale, std::abs(Rt[j]));
    }
    out.push_back(r);
  }
  return out;
}

// Lower comparison curve for min R from dR/dt >= Delta R - R + R^2/(2n).
inline double scalar_lower_curve(double rho0, double t, int n = 1) {
  const double two_n = 2.0 * n;
  if (rho0 == 0.0) return 0.0;
  double inv = 1.0 / two_n + (1.0 / rho0 - 1.0 / two_n) * std::exp(t);
  if (inv <= 0.0) return std::numeric_limits<double>::infinity();  // blow-up; only possible for rho0 > 2n
  return 1.0 / inv;
}

struct ScalarLowerBoundReport {
  double worst_margin = std::numeric_limits<double>::infinity();  // min over checkpoints of min R - curve
  double worst_t = 0.0;
};

inline ScalarLowerBoundReport scalar_lower_bound_check(const FlowTrajectory& tr) {
  ScalarLowerBoundReport rep;
  const double rho0 = tr.monitors.front().Rt_min;
  for (const auto& m : tr.monitors) {
    double d = m.Rt_min - scalar_lower_curve(rho0, m.t);
    if (d < rep.worst_margin) {
      rep.worst_margin = d;
      rep.worst_t = m.t;
    }
  }
  return rep;
}

// Interpolated metric between checkpoints (linear in t on Psi), with the frame velocity.
struct InterpolatedMetric {
  Profile metric;
  RField phi_dot;
  double tau = 1.0;
};

inline InterpolatedMetric interpolate(const FlowTrajectory& tr, double t) {
  const auto& S = tr.snapshots;
  if (S.empty() || t < S.front().t - 1e-12 || t > S.back().t + 1e-12)
    fail(ErrorKind::TrajectoryGap, "time " + std::to_string(t) + " is outside the stored trajectory");
  std::size_t k = 0;
  while (k + 2 < S.size() && S[k + 1].t < t) ++k;
  double a = S[k + 1].t > S[k].t ? (t - S[k].t) / (S[k + 1].t - S[k].t) : 0.0;
  a = std::clamp(a, 0.0, 1.0);
  InterpolatedMetric im;
  im.metric = tr.base;
  const int n = tr.base.nodes();
  im.phi_dot.resize(n);
  for (int j = 0; j < n; ++j) {
    im.metric.psi[j] = (1.0 - a) * S[k].psi[j] + a * S[k + 1].psi[j];
    im.phi_dot[j] = (1.0 - a) * S[k].phi_dot[j] + a * S[k + 1].phi_dot[j];
  }
  im.tau = (S[k].tau - 1.0) * std::exp(t - S[k].t) + 1.0;
  return im;
}

// Flows of a one-parameter family of end ratios with fixed total length, compared on the common
// normalized coordinate (x + beta_minus) / S against a direct run at the limiting ratio.
struct ReebFamilyMember {
  double rho = 1.0;
  double initial_distance = 0.0;  // max |Psi - Psi_ref| at t = 0
  double deviation = 0.0;         // max over sample times
  int steps = 0;
};

struct ReebFamilyReport {
  double rho_limit = 1.0;
  std::vector<ReebFamilyMember> members;
  bool monotone = true;  // deviations decrease along the sequence
};

inline double profile_distance(const Profile& a, const Profile& b) {
  if (a.nodes() != b.nodes()) fail(ErrorKind::NonPositiveParameter, "profiles must share the grid size");
  double d = 0.0;
  for (int j = 0; j < a.nodes(); ++j) d = std::max(d, std::abs(a.psi[j] - b.psi[j]));
  return d;
}

inline ReebFamilyReport reeb_family_experiment(double S, const std::vector<double>& rhos, double rho_limit, int N,
                                               double t_end, int samples = 20, int checkpoint_every = 20) {
  FlowOptions opt;
  opt.t_end = t_end;
  opt.checkpoint_every = checkpoint_every;
  auto run = [&](double rho) {
    FlowProblem pb = make_flow_problem(reeb_profile(S, rho, N));
    return run_flow(pb, RField(pb.base.nodes(), 0.0), opt);
  };
  FlowTrajectory ref = run(rho_limit);
  ReebFamilyReport rep;
  rep.rho_limit = rho_limit;
  for (double rho : rhos) {
    FlowTrajectory tr = run(rho);
    ReebFamilyMember m;
    m.rho = rho;
    m.steps = tr.steps;
    m.initial_distance = profile_distance(tr.metric_at(0), ref.metric_at(0));
    for (int k = 0; k <= samples; ++k) {
      double t = t_end * k / samples;
      m.deviation = std::max(m.deviation, profile_distance(interpolate(tr, t).metric, interpolate(ref, t).metric));
    }
    if (!rep.members.empty() && m.deviation > rep.members.back().deviation) rep.monotone = false;
    rep.members.push_back(m);
  }
  return rep;
}

}  // namespace sasaki
