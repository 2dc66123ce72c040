#pragma once

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "sasaki/profile.hpp"

namespace sasaki {

// Axisymmetric shrinking soliton on [-beta_minus, beta_plus]: Psi' = alpha Psi - 2x, Psi = 0 at both ends.
// The soliton potential is f = alpha x + const.
struct SolitonProfile {
  double alpha = 0.0;
  double beta_minus = 1.0, beta_plus = 1.0;
  RField x, psi;
};

namespace soliton_detail {

// Integral of y e^{-alpha y} over [a, b], with a series near alpha = 0.
inline double moment(double alpha, double a, double b) {
  if (std::abs(alpha) * std::max(std::abs(a), std::abs(b)) < 1e-4) {
    double s = 0.0, term_a = 1.0, term_b = 1.0, fact = 1.0;
    for (int k = 0; k < 8; ++k) {
      // y^{k+1} (-alpha)^k / k!
      term_a = std::pow(a, k + 2) / (k + 2);
      term_b = std::pow(b, k + 2) / (k + 2);
      s += std::pow(-alpha, k) / fact * (term_b - term_a);
      fact *= (k + 1);
    }
    return s;
  }
  auto F = [alpha](double y) { return -(y / alpha + 1.0 / (alpha * alpha)) * std::exp(-alpha * y); };
  return F(b) - F(a);
}

}  // namespace soliton_detail

// Closed form: alpha solves int y e^{-alpha y} = 0, Psi(x) = -2 e^{alpha x} int_{-beta_minus}^x y e^{-alpha y} dy.
inline SolitonProfile soliton_closed_form(double beta_minus, double beta_plus, int N) {
  SolitonProfile s;
  s.beta_minus = beta_minus;
  s.beta_plus = beta_plus;
  auto f = [&](double a) { return soliton_detail::moment(a, -beta_minus, beta_plus); };
  if (std::abs(beta_minus - beta_plus) < 1e-15) {
    s.alpha = 0.0;
  } else {
    // the moment is decreasing in alpha; bracket around the sign change
    double lo = -1.0, hi = 1.0;
    while (f(lo) < 0.0) lo *= 2.0;
    while (f(hi) > 0.0) hi *= 2.0;
    boost::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
    s.alpha = 0.5 * (r.first + r.second);
  }
  const double h = (beta_minus + beta_plus) / N;
  s.x.resize(N + 1);
  s.psi.resize(N + 1);
  for (int j = 0; j <= N; ++j) {
    double x = j == N ? beta_plus : -beta_minus + j * h;
    s.x[j] = x;
    s.psi[j] = -2.0 * std::exp(s.alpha * x) * soliton_detail::moment(s.alpha, -beta_minus, x);
  }
  s.psi[0] = s.psi[N] = 0.0;
  return s;
}

// Independent route: shoot the ODE from the left end with an adaptive Dormand-Prince integrator and
// adjust alpha by bisection until Psi vanishes at the right end.
inline SolitonProfile soliton_shooting(double beta_minus, double beta_plus, int N, double tol = 1e-12) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 1>;
  auto endpoint = [&](double alpha) {
    State y{0.0};
    auto rhs = [alpha](const State& s, State& d, double x) { d[0] = alpha * s[0] - 2.0 * x; };
    ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-14, 1e-14), rhs, y, -beta_minus,
                            beta_plus, 1e-3);
    return y[0];
  };
  // Psi(beta_plus) is increasing in alpha near the root; bracket then bisect.
  double lo = -1.0, hi = 1.0;
  int guard = 0;
  while (endpoint(lo) > 0.0 && guard++ < 60) lo *= 2.0;
  guard = 0;
  while (endpoint(hi) < 0.0 && guard++ < 60) hi *= 2.0;
  if (endpoint(lo) > 0.0 || endpoint(hi) < 0.0) fail(ErrorKind::ShootingNoConverge, "could not bracket alpha");
  int iters = 0;
  while (hi - lo > tol && iters++ < 200) {
    double mid = 0.5 * (lo + hi);
    (endpoint(mid) < 0.0 ? lo : hi) = mid;
  }
  if (hi - lo > tol) fail(ErrorKind::ShootingNoConverge, "bisection did not converge");
  SolitonProfile s;
  s.alpha = 0.5 * (lo + hi);
  s.beta_minus = beta_minus;
  s.beta_plus = beta_plus;
  const double h = (beta_minus + beta_plus) / N;
  s.x.resize(N + 1);
  s.psi.resize(N + 1);
  State y{0.0};
  auto rhs = [a = s.alpha](const State& st, State& d, double x) { d[0] = a * st[0] - 2.0 * x; };
  auto stepper = ode::make_dense_output(1e-14, 1e-14, ode::runge_kutta_dopri5<State>());
  std::vector<double> xs;
  for (int j = 0; j <= N; ++j) xs.push_back(j == N ? beta_plus : -beta_minus + j * h);
  int j = 0;
  ode::integrate_times(stepper, rhs, y, xs.begin(), xs.end(), 1e-3, [&](const State& st, double x) {
    s.x[j] = x;
    s.psi[j] = st[0];
    ++j;
  });
  s.psi[0] = 0.0;
  s.psi[N] = 0.0;
  return s;
}

}  // namespace sasaki
