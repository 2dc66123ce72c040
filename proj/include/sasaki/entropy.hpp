#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <random>

#include "sasaki/flow.hpp"
#include "sasaki/metric.hpp"

namespace sasaki {

// Two readings of the scalar and gradient terms. `riemannian` uses R^T and |grad f|^2 of the
// Riemannian transverse metric; `kahler` uses g^{i jbar} contractions (half of each), the reading under
// which the coupled monotonicity formula holds.
enum class EntropyConvention { riemannian, kahler };

inline double convention_factor(EntropyConvention c) { return c == EntropyConvention::kahler ? 0.5 : 1.0; }

// Quadrature data: integral of f dV = sum m_j f_j, integral of |grad f|^2 dV = f^T K f.
struct EntropyGeometry {
  int n = 1;
  RField m;
  RField R;
  Eigen::SparseMatrix<double> K;
  double volume = 0.0;

  int size() const { return static_cast<int>(m.size()); }
};

inline EntropyGeometry entropy_geometry(const Profile& p) {
  EntropyGeometry g;
  g.n = 1;
  g.m = profile_ops::volume_weights(p);
  g.R = profile_ops::scalar_curvature(p);
  g.volume = p.volume();
  RField mid = profile_ops::midpoint_psi(p);
  const double c = 2.0 * kPi * p.fiber_length / p.h;
  std::vector<Eigen::Triplet<double>> t;
  for (int j = 0; j < p.N; ++j) {
    double k = c * mid[j];
    t.emplace_back(j, j, k);
    t.emplace_back(j + 1, j + 1, k);
    t.emplace_back(j, j + 1, -k);
    t.emplace_back(j + 1, j, -k);
  }
  g.K.resize(p.nodes(), p.nodes());
  g.K.setFromTriplets(t.begin(), t.end());
  return g;
}

namespace entropy_detail {

// Periodic one-sided difference along one axis: dir = +1 forward, -1 backward.
inline Eigen::SparseMatrix<double> periodic_difference(const Grid& g, int axis, int dir) {
  const std::size_t P = g.size();
  const std::size_t st = g.stride(axis);
  const int m = g.dims[axis];
  std::vector<Eigen::Triplet<double>> t;
  std::vector<int> idx;
  for (std::size_t p = 0; p < P; ++p) {
    g.unravel(p, idx);
    int i = idx[axis];
    std::size_t base = p - static_cast<std::size_t>(i) * st;
    std::size_t q = base + static_cast<std::size_t>((i + dir + m) % m) * st;
    t.emplace_back(static_cast<int>(p), static_cast<int>(q), dir / g.h[axis]);
    t.emplace_back(static_cast<int>(p), static_cast<int>(p), -dir / g.h[axis]);
  }
  Eigen::SparseMatrix<double> D(static_cast<int>(P), static_cast<int>(P));
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

}  // namespace entropy_detail

// Periodic chart: the energy averages the forward and the backward difference quotients,
//   f^T K f = 1/2 sum_s sum_p m_p (D^s f)_p^T g_R^{-1}(p) (D^s f)_p,
// which is second order and has only constants in its kernel.
inline EntropyGeometry entropy_geometry(const TransverseMetricField& mf, const CurvatureField& curv) {
  const Grid& g = mf.grid();
  if (mf.source_chart->boundary.kind != BoundaryKind::periodic)
    fail(ErrorKind::NonPeriodicChart, "chart entropy needs a periodic chart");
  const int n = mf.n;
  const std::size_t P = g.size();
  EntropyGeometry e;
  e.n = n;
  e.m.resize(P);
  e.R.resize(P);
  RField lw = lattice_weights(g);
  e.volume = 0.0;
  std::vector<Eigen::MatrixXd> inv(P);
  for (std::size_t p = 0; p < P; ++p) {
    e.m[p] = mf.source_chart->fiber_length * lw[p] * mf.det[p];
    e.R[p] = curv.scalar[p];
    e.volume += e.m[p];
    Eigen::MatrixXcd gm = mf.g_at(p);
    Eigen::MatrixXd real(2 * n, 2 * n);
    // axes (x_i, y_i) interleaved
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        real(2 * i, 2 * j) = gm(i, j).real();
        real(2 * i + 1, 2 * j + 1) = gm(i, j).real();
        real(2 * i, 2 * j + 1) = gm(i, j).imag();
        real(2 * i + 1, 2 * j) = -gm(i, j).imag();
      }
    inv[p] = real.inverse();
  }
  e.K.resize(static_cast<int>(P), static_cast<int>(P));
  for (int dir : {1, -1}) {
    std::vector<Eigen::SparseMatrix<double>> D;
    for (int a = 0; a < 2 * n; ++a) D.push_back(entropy_detail::periodic_difference(g, a, dir));
    for (int a = 0; a < 2 * n; ++a)
      for (int b = 0; b < 2 * n; ++b) {
        std::vector<Eigen::Triplet<double>> t;
        for (std::size_t p = 0; p < P; ++p)
          t.emplace_back(static_cast<int>(p), static_cast<int>(p), 0.5 * e.m[p] * inv[p](a, b));
        Eigen::SparseMatrix<double> W(static_cast<int>(P), static_cast<int>(P));
        W.setFromTriplets(t.begin(), t.end());
        Eigen::SparseMatrix<double> term = Eigen::SparseMatrix<double>(D[a].transpose()) * W * D[b];
        e.K += term;
      }
  }
  Eigen::SparseMatrix<double> Kt = e.K.transpose();
  e.K = 0.5 * (e.K + Kt);
  return e;
}

// W in terms of w = e^{-f/2}:
//   W = tau^{-n} [ 4 tau c w^T K w + sum m (tau c R - log w^2) w^2 ].
inline double W_of_w(const EntropyGeometry& g, const RField& w, double tau, EntropyConvention conv) {
  const double c = convention_factor(conv);
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), g.size());
  double s = 4.0 * tau * c * wv.dot(g.K * wv);
  for (int j = 0; j < g.size(); ++j) {
    if (!(w[j] > 0.0)) {
      if (w[j] == 0.0) continue;
      fail(ErrorKind::ConstraintUnsatisfiable, "w must be positive");
    }
    s += g.m[j] * (tau * c * g.R[j] - std::log(w[j] * w[j])) * w[j] * w[j];
  }
  return std::pow(tau, -g.n) * s;
}

// dW/dw (no constraint).
inline RField W_grad_w(const EntropyGeometry& g, const RField& w, double tau, EntropyConvention conv) {
  const double c = convention_factor(conv);
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), g.size());
  Eigen::VectorXd kw = g.K * wv;
  RField out(g.size());
  const double tn = std::pow(tau, -g.n);
  for (int j = 0; j < g.size(); ++j)
    out[j] = tn * (8.0 * tau * c * kw[j] + 2.0 * g.m[j] * (tau * c * g.R[j] - std::log(w[j] * w[j]) - 1.0) * w[j]);
  return out;
}

inline double constraint_mass(const EntropyGeometry& g, const RField& f, double tau) {
  double s = 0.0;
  for (int j = 0; j < g.size(); ++j) s += g.m[j] * std::exp(-f[j]);
  return std::pow(tau, -g.n) * s;
}

struct WValue {
  double W = 0.0;
  double shift = 0.0;               // constant added to f to satisfy the constraint
  double constraint_residual = 0.0;  // before the shift
};

// Raw W of f without renormalization.
inline double W_raw(const EntropyGeometry& g, const RField& f, double tau, EntropyConvention conv) {
  RField w(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) w[j] = std::exp(-0.5 * f[j]);
  return W_of_w(g, w, tau, conv);
}

// dW/df for the raw functional.
inline RField W_raw_grad(const EntropyGeometry& g, const RField& f, double tau, EntropyConvention conv) {
  RField w(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) w[j] = std::exp(-0.5 * f[j]);
  RField gw = W_grad_w(g, w, tau, conv);
  for (std::size_t j = 0; j < f.size(); ++j) gw[j] *= -0.5 * w[j];
  return gw;
}

// W(g, f, tau) after shifting f so that the weighted mass is 1.
inline WValue W_eval(const EntropyGeometry& g, const RField& f, double tau, EntropyConvention conv) {
  if (!(tau > 0.0)) fail(ErrorKind::NonPositiveTau, "tau must be positive");
  double fmin = *std::min_element(f.begin(), f.end());
  double tail = 0.0;
  for (int j = 0; j < g.size(); ++j) tail += g.m[j] * std::exp(-(f[j] - fmin));
  double log_mass = std::log(tail) - fmin - g.n * std::log(tau);
  if (!std::isfinite(log_mass)) fail(ErrorKind::ConstraintUnsatisfiable, "e^{-f} mass is not finite");
  WValue v;
  v.shift = log_mass;
  v.constraint_residual = std::expm1(log_mass);
  RField fs(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) fs[j] = f[j] + log_mass;
  v.W = W_raw(g, fs, tau, conv);
  return v;
}

struct EntropyReport {
  double mu_estimate = 0.0;
  double euler_lagrange_residual = 0.0;
  RField minimizer_w;
  int iterations = 0;
  int newton_iterations = 0;
  int best_start = 0;
  std::vector<double> start_values;
};

struct MinimizerOptions {
  double tol = 1e-8;
  int random_starts = 5;
  std::uint64_t seed = 1;
  int max_gradient_iterations = 3000;
  int max_newton_iterations = 40;
  double handoff = 1e-3;  // EL residual (relative) at which Newton takes over
};

// Pointwise residual of 4 tau c Delta w + w log w^2 - tau c R w + mu w with Delta = -M^{-1} K.
inline RField euler_lagrange(const EntropyGeometry& g, const RField& w, double mu, double tau,
                             EntropyConvention conv) {
  const double c = convention_factor(conv);
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), g.size());
  Eigen::VectorXd kw = g.K * wv;
  RField r(g.size());
  for (int j = 0; j < g.size(); ++j)
    r[j] = -4.0 * tau * c * kw[j] / g.m[j] + w[j] * std::log(w[j] * w[j]) - tau * c * g.R[j] * w[j] + mu * w[j];
  return r;
}

namespace entropy_detail {

inline double mass_w(const EntropyGeometry& g, const RField& w, double tau) {
  double s = 0.0;
  for (int j = 0; j < g.size(); ++j) s += g.m[j] * w[j] * w[j];
  return std::pow(tau, -g.n) * s;
}

inline void normalize(const EntropyGeometry& g, RField& w, double tau) {
  double s = std::sqrt(mass_w(g, w, tau));
  for (auto& v : w) v /= s;
}

inline double el_norm(const EntropyGeometry& g, const RField& w, double tau, EntropyConvention conv) {
  double mu = W_of_w(g, w, tau, conv);
  RField r = euler_lagrange(g, w, mu, tau, conv);
  return profile_ops::max_abs(r);
}

struct Local {
  RField w;
  double W = 0.0;
  double el = 0.0;
  int iterations = 0;
  int newton = 0;
};

// Projected gradient in the H^1 metric with Armijo backtracking, then Newton on (w, lambda).
inline Local minimize_from(const EntropyGeometry& g, RField w, double tau, EntropyConvention conv,
                           const MinimizerOptions& opt) {
  const int N = g.size();
  const double c = convention_factor(conv);
  const double tn = std::pow(tau, -g.n);
  normalize(g, w, tau);
  Eigen::SparseMatrix<double> P = (8.0 * tau * c * tn) * g.K;
  for (int j = 0; j < N; ++j) P.coeffRef(j, j) += 2.0 * tn * g.m[j];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(P);
  Local out;
  double W = W_of_w(g, w, tau, conv);
  double wscale = std::sqrt(tn * g.volume > 0 ? 1.0 / (g.volume * tn) : 1.0);
  int it = 0;
  for (; it < opt.max_gradient_iterations; ++it) {
    double el = el_norm(g, w, tau, conv);
    if (el < opt.handoff * wscale) break;
    RField gr = W_grad_w(g, w, tau, conv);
    Eigen::Map<Eigen::VectorXd> gv(gr.data(), N);
    Eigen::VectorXd d = chol.solve(gv);
    Eigen::VectorXd mw(N);
    for (int j = 0; j < N; ++j) mw[j] = g.m[j] * w[j];
    Eigen::VectorXd pm = chol.solve(mw);
    d -= (mw.dot(d) / mw.dot(pm)) * pm;
    double slope = gv.dot(d);
    if (slope <= 0.0) break;
    double a = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, a *= 0.5) {
      RField trial(N);
      bool ok = true;
      for (int j = 0; j < N; ++j) {
        trial[j] = w[j] - a * d[j];
        if (!(trial[j] > 0.0)) ok = false;
      }
      if (!ok) continue;
      normalize(g, trial, tau);
      double Wt = W_of_w(g, trial, tau, conv);
      if (Wt <= W - 1e-4 * a * slope) {
        w = std::move(trial);
        W = Wt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  out.iterations = it;
  // Newton on G(w) - lambda M w = 0, w^T M w = tau^n, with G = 4 tau c K w + M (tau c R - log w^2 - 1) w.
  const double taun = std::pow(tau, g.n);
  for (int k = 0; k < opt.max_newton_iterations; ++k) {
    Eigen::Map<Eigen::VectorXd> wv(w.data(), N);
    Eigen::VectorXd kw = g.K * wv;
    Eigen::VectorXd G(N), Mw(N);
    for (int j = 0; j < N; ++j) {
      Mw[j] = g.m[j] * w[j];
      G[j] = 4.0 * tau * c * kw[j] + g.m[j] * (tau * c * g.R[j] - std::log(w[j] * w[j]) - 1.0) * w[j];
    }
    double lambda = wv.dot(G) / wv.dot(Mw);
    double el = el_norm(g, w, tau, conv);
    out.el = el;
    if (el < 0.05 * opt.tol) break;
    Eigen::SparseMatrix<double> J = (4.0 * tau * c) * g.K;
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < J.outerSize(); ++i)
      for (Eigen::SparseMatrix<double>::InnerIterator itr(J, i); itr; ++itr)
        t.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
    for (int j = 0; j < N; ++j) {
      t.emplace_back(j, j, g.m[j] * (tau * c * g.R[j] - std::log(w[j] * w[j]) - 3.0 - lambda));
      t.emplace_back(j, N, -Mw[j]);
      t.emplace_back(N, j, 2.0 * Mw[j]);
    }
    Eigen::SparseMatrix<double> A(N + 1, N + 1);
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd rhs(N + 1);
    for (int j = 0; j < N; ++j) rhs[j] = -(G[j] - lambda * Mw[j]);
    rhs[N] = -(wv.dot(Mw) - taun);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) break;
    Eigen::VectorXd dx = lu.solve(rhs);
    double a = 1.0;
    RField trial(N);
    bool ok = false;
    for (int ls = 0; ls < 30 && !ok; ++ls, a *= 0.5) {
      ok = true;
      for (int j = 0; j < N; ++j) {
        trial[j] = w[j] + a * dx[j];
        if (!(trial[j] > 0.0)) ok = false;
      }
    }
    if (!ok || !dx.allFinite()) break;
    w = trial;
    normalize(g, w, tau);
    out.newton = k + 1;
  }
  out.el = el_norm(g, w, tau, conv);
  out.W = W_of_w(g, w, tau, conv);
  out.w = std::move(w);
  return out;
}

}  // namespace entropy_detail

// Minimizes W over the constraint sphere from the constant state and `random_starts` random positive
// states; keeps the lowest value.
inline EntropyReport mu_minimize(const EntropyGeometry& g, double tau, EntropyConvention conv,
                                 const MinimizerOptions& opt = {}) {
  if (!(tau > 0.0)) fail(ErrorKind::NonPositiveTau, "tau must be positive");
  const int N = g.size();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  EntropyReport rep;
  std::optional<entropy_detail::Local> best;
  int total_it = 0, total_newton = 0;
  for (int s = 0; s <= opt.random_starts; ++s) {
    RField w(N, 1.0);
    if (s > 0)
      for (auto& v : w) v = std::exp(0.5 * U(rng));
    auto loc = entropy_detail::minimize_from(g, std::move(w), tau, conv, opt);
    total_it += loc.iterations;
    total_newton += loc.newton;
    rep.start_values.push_back(loc.W);
    if (!best || loc.W < best->W - 1e-12 || (std::abs(loc.W - best->W) <= 1e-12 && loc.el < best->el)) {
      best = loc;
      rep.best_start = s;
    }
  }
  rep.mu_estimate = best->W;
  rep.euler_lagrange_residual = best->el;
  rep.minimizer_w = best->w;
  rep.iterations = total_it;
  rep.newton_iterations = total_newton;
  if (!(rep.euler_lagrange_residual < opt.tol))
    fail(ErrorKind::MaxIterations, "Euler-Lagrange residual " + std::to_string(rep.euler_lagrange_residual) +
                                       " above tolerance");
  if (!(*std::min_element(rep.minimizer_w.begin(), rep.minimizer_w.end()) > 0.0))
    fail(ErrorKind::NegativeMinimizer, "minimizer is not positive");
  return rep;
}

// ---- transport along a stored trajectory ----

// literal: dw/dt = -Delta w + (R^T - n/tau) w with the Riemannian R^T.
// conjugate: the same equation with g^{i jbar} R_{i jbar} = R^T/2 in place of R^T; it is the adjoint
// heat equation for the density e^{-f} and conserves the weighted mass.
enum class HeatConvention { literal, conjugate };

struct BackwardHeatResult {
  std::vector<double> t;  // checkpoint times, increasing
  std::vector<RField> w;  // solution at each checkpoint
  double min_interior = 0.0;
  int steps = 0;
};

namespace entropy_detail {

// Tridiagonal operator L w = (1/2) Delta_R w + v w' on the profile grid.
struct Tridiag {
  RField lo, di, up;
};

inline Tridiag transport_operator(const Profile& p, const RField& vel) {
  const int n = p.nodes();
  Tridiag L{RField(n, 0.0), RField(n, 0.0), RField(n, 0.0)};
  RField mid = profile_ops::midpoint_psi(p), q = profile_ops::dx_weights(p);
  for (int j = 0; j < p.N; ++j) {
    double k = 0.5 * mid[j] / p.h;
    L.di[j] -= k / q[j];
    L.up[j] += k / q[j];
    L.di[j + 1] -= k / q[j + 1];
    L.lo[j + 1] += k / q[j + 1];
  }
  for (int j = 1; j + 1 < n; ++j) {
    L.up[j] += vel[j] / (2.0 * p.h);
    L.lo[j] -= vel[j] / (2.0 * p.h);
  }
  return L;
}

inline RField apply_tridiag(const Tridiag& L, const RField& w) {
  const int n = static_cast<int>(w.size());
  RField o(n);
  for (int j = 0; j < n; ++j) {
    double s = L.di[j] * w[j];
    if (j > 0) s += L.lo[j] * w[j - 1];
    if (j + 1 < n) s += L.up[j] * w[j + 1];
    o[j] = s;
  }
  return o;
}

// Solves (I - a L) x = b.
inline RField solve_shifted(const Tridiag& L, double a, const RField& b) {
  const int n = static_cast<int>(b.size());
  RField cp(n), dp(n), x(n);
  double d0 = 1.0 - a * L.di[0];
  cp[0] = -a * L.up[0] / d0;
  dp[0] = b[0] / d0;
  for (int j = 1; j < n; ++j) {
    double lo = -a * L.lo[j], di = 1.0 - a * L.di[j], up = j + 1 < n ? -a * L.up[j] : 0.0;
    double den = di - lo * cp[j - 1];
    cp[j] = up / den;
    dp[j] = (b[j] - lo * dp[j - 1]) / den;
  }
  x[n - 1] = dp[n - 1];
  for (int j = n - 2; j >= 0; --j) x[j] = dp[j] - cp[j] * x[j + 1];
  return x;
}

}  // namespace entropy_detail

// Integrates in s = T - t: dw/ds = Delta w - (R_eff - n/tau) w + w' x_dot (moment-frame drift),
// Strang split: exact reaction half steps around a Crank-Nicolson transport step.
inline BackwardHeatResult backward_heat(const FlowTrajectory& tr, const RField& w_T, double T, HeatConvention conv,
                                        double ds_fraction = 1.0) {
  using namespace entropy_detail;
  const auto& S = tr.snapshots;
  if (S.size() < 2) fail(ErrorKind::TrajectoryGap, "trajectory needs at least two checkpoints");
  if (T > S.back().t + 1e-12 || T <= S.front().t) fail(ErrorKind::TrajectoryGap, "T outside the trajectory");
  const double rf = conv == HeatConvention::conjugate ? 0.5 : 1.0;
  const int n = tr.base.nodes();
  const int dimn = 1;
  auto potential = [&](const InterpolatedMetric& im) {
    RField R = profile_ops::scalar_curvature(im.metric);
    for (auto& v : R) v = rf * v - dimn / im.tau;
    return R;
  };
  // checkpoint times at or below T, descending
  std::vector<double> times;
  for (auto it = S.rbegin(); it != S.rend(); ++it)
    if (it->t <= T + 1e-12) times.push_back(it->t);
  if (times.empty() || std::abs(times.front() - T) > 1e-12) times.insert(times.begin(), T);
  BackwardHeatResult res;
  RField w = w_T;
  std::vector<RField> ws{w};
  std::vector<double> ts{times.front()};
  double maxpsi = 0.0;
  for (const auto& sn : S) maxpsi = std::max(maxpsi, profile_ops::max_of(sn.psi));
  const double ds_max = ds_fraction * tr.base.h * tr.base.h / maxpsi;
  res.min_interior = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    double t1 = times[k], t0 = times[k + 1];
    int m = std::max(1, static_cast<int>(std::ceil((t1 - t0) / ds_max - 1e-9)));
    double ds = (t1 - t0) / m;
    for (int i = 0; i < m; ++i) {
      double ta = t1 - i * ds, tb = t1 - (i + 1) * ds, tm = 0.5 * (ta + tb);
      auto ima = interpolate(tr, ta), imb = interpolate(tr, tb), imm = interpolate(tr, tm);
      RField Va = potential(ima), Vb = potential(imb);
      for (int j = 0; j < n; ++j) w[j] *= std::exp(-0.5 * ds * Va[j]);
      RField vel = frame_velocity(imm.metric, imm.phi_dot);
      auto L = transport_operator(imm.metric, vel);
      RField Lw = apply_tridiag(L, w), b(n);
      for (int j = 0; j < n; ++j) b[j] = w[j] + 0.5 * ds * Lw[j];
      w = solve_shifted(L, 0.5 * ds, b);
      for (int j = 0; j < n; ++j) w[j] *= std::exp(-0.5 * ds * Vb[j]);
      ++res.steps;
    }
    double mn = profile_ops::min_of(w);
    if (mn < -1e-10) fail(ErrorKind::NegativeEvolution, "backward heat solution went negative: " + std::to_string(mn));
    res.min_interior = std::min(res.min_interior, mn);
    ws.push_back(w);
    ts.push_back(t0);
  }
  std::reverse(ws.begin(), ws.end());
  std::reverse(ts.begin(), ts.end());
  res.t = std::move(ts);
  res.w = std::move(ws);
  return res;
}

// Forward heat equation dh/dt = Delta h along the trajectory (Crank-Nicolson in the moving frame);
// pairs with the conjugate backward solution to give a conserved weighted mass.
inline BackwardHeatResult forward_heat(const FlowTrajectory& tr, const RField& h0, double T, double ds_fraction = 1.0) {
  using namespace entropy_detail;
  const auto& S = tr.snapshots;
  if (S.size() < 2) fail(ErrorKind::TrajectoryGap, "trajectory needs at least two checkpoints");
  if (T > S.back().t + 1e-12) fail(ErrorKind::TrajectoryGap, "T outside the trajectory");
  const int n = tr.base.nodes();
  double maxpsi = 0.0;
  for (const auto& sn : S) maxpsi = std::max(maxpsi, profile_ops::max_of(sn.psi));
  const double ds_max = ds_fraction * tr.base.h * tr.base.h / maxpsi;
  BackwardHeatResult res;
  RField h = h0;
  res.t.push_back(S.front().t);
  res.w.push_back(h);
  res.min_interior = profile_ops::min_of(h);
  for (std::size_t k = 0; k + 1 < S.size() && S[k].t < T - 1e-12; ++k) {
    double t0 = S[k].t, t1 = std::min(S[k + 1].t, T);
    int m = std::max(1, static_cast<int>(std::ceil((t1 - t0) / ds_max - 1e-9)));
    double ds = (t1 - t0) / m;
    for (int i = 0; i < m; ++i) {
      auto im = interpolate(tr, t0 + (i + 0.5) * ds);
      RField vel = frame_velocity(im.metric, im.phi_dot);
      for (auto& v : vel) v = -v;
      auto L = transport_operator(im.metric, vel);
      RField Lh = apply_tridiag(L, h), b(n);
      for (int j = 0; j < n; ++j) b[j] = h[j] + 0.5 * ds * Lh[j];
      h = solve_shifted(L, 0.5 * ds, b);
      ++res.steps;
    }
    res.min_interior = std::min(res.min_interior, profile_ops::min_of(h));
    res.t.push_back(t1);
    res.w.push_back(h);
  }
  return res;
}

// ---- monotonicity ----

struct CoupledRow {
  double t = 0.0, tau = 1.0, W = 0.0, dWdt_numeric = 0.0, dWdt_formula = 0.0;
  double soliton_term = 0.0, hessian_term = 0.0;
  double min_soliton_integrand = 0.0, min_hessian_integrand = 0.0;
  double constraint_residual = 0.0;
};

struct CoupledReport {
  std::vector<CoupledRow> rows;
  double worst_dWdt = std::numeric_limits<double>::infinity();
  double worst_match = 0.0;  // max |dW/dt - RHS| / (1 + |RHS|) over interior checkpoints
};

// Integrands of the two nonnegative terms for density v = e^{-f} on a profile (n = 1, Kahler norms):
//   |R_{i jbar} + f_{i jbar} - g_{i jbar}/tau|^2 = (R/2 + Delta f / 2 - 1/tau)^2,  |f_{ij}|^2 = (Psi f''/2)^2.
struct SolitonIntegrands {
  RField einstein, hessian;
};

inline SolitonIntegrands soliton_integrands(const Profile& p, const RField& f, double tau) {
  RField R = profile_ops::scalar_curvature(p), lap = profile_ops::laplacian(p, f), dd = profile_ops::d2(f, p.h);
  SolitonIntegrands s{RField(p.nodes()), RField(p.nodes())};
  for (int j = 0; j < p.nodes(); ++j) {
    double e = 0.5 * R[j] + 0.5 * lap[j] - 1.0 / tau;
    double hh = 0.5 * p.psi[j] * dd[j];
    s.einstein[j] = e * e;
    s.hessian[j] = hh * hh;
  }
  return s;
}

// Transports v = e^{-f} backward by the conjugate equation from v_T, then evaluates the Kahler W along the
// trajectory and compares its time derivative with the two-integral formula.
inline CoupledReport coupled_monotonicity_check(const FlowTrajectory& tr, const RField& f_T, double T,
                                                double ds_fraction = 1.0) {
  RField vT(f_T.size());
  for (std::size_t j = 0; j < f_T.size(); ++j) vT[j] = std::exp(-f_T[j]);
  auto bh = backward_heat(tr, vT, T, HeatConvention::conjugate, ds_fraction);
  CoupledReport rep;
  const std::size_t K = bh.t.size();
  std::vector<double> W(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto im = interpolate(tr, bh.t[k]);
    EntropyGeometry g = entropy_geometry(im.metric);
    RField w(bh.w[k].size()), f(bh.w[k].size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] = std::sqrt(std::max(bh.w[k][j], 0.0));
      f[j] = -std::log(bh.w[k][j]);
    }
    CoupledRow row;
    row.t = bh.t[k];
    row.tau = im.tau;
    row.W = W_of_w(g, w, im.tau, EntropyConvention::kahler);
    row.constraint_residual = constraint_mass(g, f, im.tau) - 1.0;
    auto si = soliton_integrands(im.metric, f, im.tau);
    const double wt = std::pow(im.tau, -g.n + 1);
    row.min_soliton_integrand = profile_ops::min_of(si.einstein);
    row.min_hessian_integrand = profile_ops::min_of(si.hessian);
    for (int j = 0; j < g.size(); ++j) {
      double e = std::exp(-f[j]) * wt * g.m[j];
      row.soliton_term += si.einstein[j] * e;
      row.hessian_term += si.hessian[j] * e;
    }
    row.dWdt_formula = row.soliton_term + row.hessian_term;
    W[k] = row.W;
    rep.rows.push_back(row);
  }
  for (std::size_t k = 0; k < K; ++k) {
    double d;
    if (K < 2) {
      d = 0.0;
    } else if (k == 0) {
      d = (W[1] - W[0]) / (bh.t[1] - bh.t[0]);
    } else if (k + 1 == K) {
      d = (W[K - 1] - W[K - 2]) / (bh.t[K - 1] - bh.t[K - 2]);
    } else {
      double h0 = bh.t[k] - bh.t[k - 1], h1 = bh.t[k + 1] - bh.t[k];
      d = -h1 / (h0 * (h0 + h1)) * W[k - 1] + (h1 - h0) / (h0 * h1) * W[k] + h0 / (h1 * (h0 + h1)) * W[k + 1];
    }
    rep.rows[k].dWdt_numeric = d;
    if (k > 0 && k + 1 < K) {
      rep.worst_dWdt = std::min(rep.worst_dWdt, d);
      double rhs = rep.rows[k].dWdt_formula;
      rep.worst_match = std::max(rep.worst_match, std::abs(d - rhs) / (1.0 + std::abs(rhs)));
    }
  }
  return rep;
}

struct MuPoint {
  double t = 0.0, tau = 1.0, mu = 0.0, el = 0.0;
};

inline std::vector<MuPoint> mu_monotonicity_check(const FlowTrajectory& tr, double tau0,
                                                  const std::vector<std::size_t>& checkpoints,
                                                  const MinimizerOptions& opt = {}) {
  std::vector<MuPoint> out;
  for (std::size_t k : checkpoints) {
    const auto& s = tr.snapshots.at(k);
    double tau = tau_evolve(tau0, s.t);
    auto rep = mu_minimize(entropy_geometry(tr.metric_at(k)), tau, EntropyConvention::kahler, opt);
    out.push_back(MuPoint{s.t, tau, rep.mu_estimate, rep.euler_lagrange_residual});
  }
  return out;
}

}  // namespace sasaki
