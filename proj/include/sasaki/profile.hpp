#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sasaki/grid.hpp"

namespace sasaki {

// Axisymmetric leaf metric dx^2/Psi + Psi dtheta^2 on [-beta_minus, beta_plus], theta in [0, 2pi).
// Psi vanishes at both ends; Psi'(-beta_minus) = slope_minus and Psi'(beta_plus) = -slope_plus,
// so the cone angles are pi * slope. Basic functions are functions of x alone.
struct Profile {
  double beta_minus = 1.0;
  double beta_plus = 1.0;
  double slope_minus = 2.0;
  double slope_plus = 2.0;
  double fiber_length = 8.0 * kPi;
  int N = 0;  // cells; N + 1 nodes
  double h = 0.0;
  RField x;
  RField psi;

  int nodes() const { return N + 1; }
  double length() const { return beta_minus + beta_plus; }
  double area() const { return 2.0 * kPi * length(); }
  double volume() const { return fiber_length * area(); }
};

inline Profile make_profile_grid(double beta_minus, double beta_plus, int N) {
  if (N < 8) fail(ErrorKind::GridTooCoarse, "profile needs at least 8 cells");
  if (!(beta_minus > 0.0) || !(beta_plus > 0.0)) fail(ErrorKind::NonPositiveParameter, "interval ends must be positive");
  Profile p;
  p.beta_minus = beta_minus;
  p.beta_plus = beta_plus;
  p.slope_minus = 2.0 * beta_minus;
  p.slope_plus = 2.0 * beta_plus;
  p.N = N;
  p.h = (beta_minus + beta_plus) / N;
  p.x.resize(N + 1);
  p.psi.assign(N + 1, 0.0);
  for (int j = 0; j <= N; ++j) p.x[j] = -beta_minus + j * p.h;
  p.x[N] = beta_plus;
  return p;
}

// Symplectic potential with the canonical boundary behavior: U = 1/2 sum l log l,
// l_- = 1 + a_- x, l_+ = 1 - a_+ x; Psi = 1/U''.
inline double guillemin_psi(double x, double a_minus, double a_plus) {
  double lm = 1.0 + a_minus * x, lp = 1.0 - a_plus * x;
  if (lm <= 0.0 || lp <= 0.0) return 0.0;
  return 2.0 * lm * lp / (a_minus * a_minus * lp + a_plus * a_plus * lm);
}

inline double guillemin_potential(double x, double a_minus, double a_plus) {
  auto xlogx = [](double l) { return l > 0.0 ? l * std::log(l) : 0.0; };
  return 0.5 * (xlogx(1.0 + a_minus * x) + xlogx(1.0 - a_plus * x));
}

inline double guillemin_potential_d1(double x, double a_minus, double a_plus) {
  return 0.5 * (a_minus * (std::log(1.0 + a_minus * x) + 1.0) - a_plus * (std::log(1.0 - a_plus * x) + 1.0));
}

// Transverse-Einstein round leaf (K = 1): Psi = 1 - x^2.
inline Profile round_profile(int N) {
  Profile p = make_profile_grid(1.0, 1.0, N);
  for (int j = 0; j <= N; ++j) p.psi[j] = 1.0 - p.x[j] * p.x[j];
  p.psi[0] = p.psi[N] = 0.0;
  p.fiber_length = 8.0 * kPi;
  return p;
}

// Leaf of the unit round S^3 (K = 4, fibers of length 2 pi).
inline Profile unit_sphere_leaf_profile(int N) {
  Profile p = make_profile_grid(0.25, 0.25, N);
  for (int j = 0; j <= N; ++j) p.psi[j] = 0.25 - 4.0 * p.x[j] * p.x[j];
  p.psi[0] = p.psi[N] = 0.0;
  p.slope_minus = p.slope_plus = 2.0;
  p.fiber_length = 2.0 * kPi;
  return p;
}

// Interval with labels 1/beta at the ends and the canonical metric on it.
inline Profile labelled_profile(double beta_minus, double beta_plus, int N) {
  Profile p = make_profile_grid(beta_minus, beta_plus, N);
  const double am = 1.0 / beta_minus, ap = 1.0 / beta_plus;
  for (int j = 0; j <= N; ++j) p.psi[j] = guillemin_psi(p.x[j], am, ap);
  p.psi[0] = p.psi[N] = 0.0;
  p.fiber_length = 4.0 * kPi * (am + ap);
  return p;
}

// Football orbifold with cone angles 2pi/p, 2pi/q (teardrop when one weight is 1).
inline Profile football_profile(int p, int q, int N) {
  if (p < 1 || q < 1) fail(ErrorKind::NonPositiveParameter, "football weights must be positive");
  int g = std::gcd(p, q);
  p /= g;
  q /= g;
  return labelled_profile(1.0 / p, 1.0 / q, N);
}

// Member of a Reeb family: total length S, end ratio beta_minus / beta_plus = rho.
inline Profile reeb_profile(double S, double rho, int N) {
  if (!(S > 0.0) || !(rho > 0.0)) fail(ErrorKind::NonPositiveParameter, "Reeb family parameters must be positive");
  return labelled_profile(S * rho / (1.0 + rho), S / (1.0 + rho), N);
}

// D-homothety: Psi(x) -> a Psi(x/a), fibers scale by a.
inline Profile d_homothetic(const Profile& p, double a) {
  if (!(a > 0.0)) fail(ErrorKind::NonPositiveParameter, "D-homothety parameter must be positive");
  Profile out = p;
  out.beta_minus *= a;
  out.beta_plus *= a;
  out.h *= a;
  for (auto& v : out.x) v *= a;
  for (auto& v : out.psi) v *= a;
  out.fiber_length *= a;
  return out;
}

namespace profile_ops {

// Trapezoid weights for dx.
inline RField dx_weights(const Profile& p) {
  RField w(p.nodes(), p.h);
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

// Quadrature weights for dV = fiber * dtheta * dx.
inline RField volume_weights(const Profile& p) {
  RField w = dx_weights(p);
  for (auto& v : w) v *= 2.0 * kPi * p.fiber_length;
  return w;
}

inline double integrate(const RField& weights, const RField& f) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += weights[j] * f[j];
  return s;
}

inline RField d1(const RField& f, double h) {
  const int n = static_cast<int>(f.size());
  RField out(n);
  for (int j = 1; j + 1 < n; ++j) out[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
  out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
  out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  return out;
}

inline RField d2(const RField& f, double h) {
  const int n = static_cast<int>(f.size());
  RField out(n);
  const double h2 = h * h;
  for (int j = 1; j + 1 < n; ++j) out[j] = (f[j + 1] - 2.0 * f[j] + f[j - 1]) / h2;
  out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
  out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
  return out;
}

inline RField midpoint_psi(const Profile& p) {
  RField m(p.N);
  for (int j = 0; j < p.N; ++j) m[j] = 0.5 * (p.psi[j] + p.psi[j + 1]);
  return m;
}

// Riemannian scalar curvature 2K = -Psi''.
inline RField scalar_curvature(const Profile& p) {
  RField r = d2(p.psi, p.h);
  for (auto& v : r) v = -v;
  return r;
}

// Conservative Riemannian Laplacian (Psi f')' with zero flux through the ends.
inline RField laplacian(const Profile& p, const RField& f) {
  const int n = p.nodes();
  RField m = midpoint_psi(p), out(n, 0.0);
  for (int j = 0; j < p.N; ++j) {
    double flux = m[j] * (f[j + 1] - f[j]) / p.h;
    out[j] += flux;
    out[j + 1] -= flux;
  }
  RField w = dx_weights(p);
  for (int j = 0; j < n; ++j) out[j] /= w[j];
  return out;
}

// Nodal |grad f|^2 = Psi f'^2 (Riemannian).
inline RField grad_norm2(const Profile& p, const RField& f) {
  RField d = d1(f, p.h), out(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) out[j] = p.psi[j] * d[j] * d[j];
  return out;
}

// Flux integration of (Psi u')' = rhs from the left end; returns u with u(-beta_minus) = 0 and the
// flux left over at the right end (zero iff the data are compatible).
struct FluxSolve {
  RField u;
  double end_flux = 0.0;
};

// Solves (Psi u')' = c0 + c1 * Psi'' exactly in the conservative discretization.
inline FluxSolve integrate_flux(const Profile& p, double c0, double c1, double left_slope) {
  FluxSolve s;
  s.u.assign(p.nodes(), 0.0);
  RField m = midpoint_psi(p);
  for (int j = 0; j < p.N; ++j) {
    double xm = 0.5 * (p.x[j] + p.x[j + 1]);
    double dpsi = (p.psi[j + 1] - p.psi[j]) / p.h;
    double flux = c0 * (xm + p.beta_minus) + c1 * (dpsi - left_slope);
    s.u[j + 1] = s.u[j] + p.h * flux / m[j];
  }
  s.end_flux = c0 * p.length() + c1 * (-p.slope_plus - left_slope);
  return s;
}

// Meridian length: exact for the piecewise-linear interpolant of Psi.
inline double meridian_length(const Profile& p) {
  double s = 0.0;
  for (int j = 0; j < p.N; ++j) {
    double a = std::sqrt(std::max(p.psi[j], 0.0)), b = std::sqrt(std::max(p.psi[j + 1], 0.0));
    if (a + b > 0.0) s += 2.0 * p.h / (a + b);
  }
  return s;
}

inline double max_abs(const RField& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

inline double min_of(const RField& f) { return *std::min_element(f.begin(), f.end()); }
inline double max_of(const RField& f) { return *std::max_element(f.begin(), f.end()); }

// Removes the dx-L2 projection onto span{1, x}.
inline void remove_affine(const Profile& p, RField& f) {
  RField w = dx_weights(p);
  double s0 = 0, s1 = 0, s2 = 0, f0 = 0, f1 = 0;
  for (int j = 0; j < p.nodes(); ++j) {
    s0 += w[j];
    s1 += w[j] * p.x[j];
    s2 += w[j] * p.x[j] * p.x[j];
    f0 += w[j] * f[j];
    f1 += w[j] * f[j] * p.x[j];
  }
  double det = s0 * s2 - s1 * s1;
  double a = (f0 * s2 - f1 * s1) / det, b = (s0 * f1 - s1 * f0) / det;
  for (int j = 0; j < p.nodes(); ++j) f[j] -= a + b * p.x[j];
}

}  // namespace profile_ops

}  // namespace sasaki
