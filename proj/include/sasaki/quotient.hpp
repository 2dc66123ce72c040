#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "sasaki/flow.hpp"
#include "sasaki/profile.hpp"

namespace sasaki {

struct ExceptionalFiber {
  double x = 0.0;       // leaf-space location (a pole)
  double length = 0.0;  // orbit length
  int isotropy = 1;
};

struct LeafPoint {
  double x = 0.0;
  double theta = 0.0;
};

// Axisymmetric leaf space dx^2/Psi + Psi dtheta^2 on [-beta_minus, beta_plus] with circle fibers
// of generic length l over it.
struct QuotientModel {
  std::string kind = "regular_sphere";  // regular_sphere | football | profile
  int p = 1, q = 1;                     // orbifold orders at the poles, 0 if the cone angle is not 2pi/k
  double beta_minus = 1.0, beta_plus = 1.0;
  double slope_minus = 2.0, slope_plus = 2.0;
  double fiber_length = 8.0 * kPi;
  std::vector<ExceptionalFiber> exceptional_fibers;
  std::function<double(double)> psi_fn, dpsi_fn, d2psi_fn;

  double psi(double x) const {
    if (x <= -beta_minus || x >= beta_plus) return 0.0;
    return std::max(psi_fn(x), 0.0);
  }
  double dpsi(double x) const { return dpsi_fn(std::clamp(x, -beta_minus, beta_plus)); }
  double d2psi(double x) const { return d2psi_fn(std::clamp(x, -beta_minus, beta_plus)); }
  double gauss_curvature(double x) const { return -0.5 * d2psi(x); }
  double scalar_curvature(double x) const { return -d2psi(x); }
  double length() const { return beta_minus + beta_plus; }
  double area() const { return 2.0 * kPi * length(); }
  double volume() const { return fiber_length * area(); }
  double cone_angle_minus() const { return kPi * slope_minus; }
  double cone_angle_plus() const { return kPi * slope_plus; }
};

namespace quotient_detail {

inline int orbifold_order(double slope) {
  double k = 2.0 / slope;
  double r = std::round(k);
  return (r >= 1.0 && std::abs(k - r) < 1e-9) ? static_cast<int>(r) : 0;
}

inline void add_exceptional(QuotientModel& m) {
  m.exceptional_fibers.clear();
  if (m.p > 1) m.exceptional_fibers.push_back({-m.beta_minus, m.fiber_length / m.p, m.p});
  if (m.q > 1) m.exceptional_fibers.push_back({m.beta_plus, m.fiber_length / m.q, m.q});
}

inline boost::math::quadrature::tanh_sinh<double>& quadrature() {
  static boost::math::quadrature::tanh_sinh<double> q(12);
  return q;
}

}  // namespace quotient_detail

// Round leaf of constant curvature K: Psi = 1/K - K x^2, fibers 8 pi / K (2 pi on the unit S^3 at K = 4).
inline QuotientModel round_quotient(double K = 4.0) {
  if (!(K > 0.0)) fail(ErrorKind::NonPositiveParameter, "curvature must be positive");
  QuotientModel m;
  m.kind = "regular_sphere";
  m.beta_minus = m.beta_plus = 1.0 / K;
  m.slope_minus = m.slope_plus = 2.0;
  m.fiber_length = 8.0 * kPi / K;
  m.psi_fn = [K](double x) { return 1.0 / K - K * x * x; };
  m.dpsi_fn = [K](double x) { return -2.0 * K * x; };
  m.d2psi_fn = [K](double) { return -2.0 * K; };
  return m;
}

// Weighted circle quotient with cone angles 2pi/p, 2pi/q and the canonical metric.
inline QuotientModel football_quotient(int p, int q) {
  if (p < 1 || q < 1) fail(ErrorKind::NonPositiveParameter, "football weights must be positive");
  const int g = std::gcd(p, q);
  p /= g;
  q /= g;
  QuotientModel m;
  m.kind = "football";
  m.p = p;
  m.q = q;
  m.beta_minus = 1.0 / p;
  m.beta_plus = 1.0 / q;
  m.slope_minus = 2.0 / p;
  m.slope_plus = 2.0 / q;
  m.fiber_length = 4.0 * kPi * (p + q);
  const double am = p, ap = q;
  auto parts = [am, ap](double x) {
    double lm = 1.0 + am * x, lp = 1.0 - ap * x;
    double N = 2.0 * lm * lp, D = am * am * lp + ap * ap * lm;
    double N1 = 2.0 * (am * lp - ap * lm), D1 = am * ap * (ap - am);
    return std::array<double, 4>{N, D, N1, D1};
  };
  m.psi_fn = [am, ap](double x) { return guillemin_psi(x, am, ap); };
  m.dpsi_fn = [parts](double x) {
    auto [N, D, N1, D1] = parts(x);
    return (N1 * D - N * D1) / (D * D);
  };
  m.d2psi_fn = [parts, am, ap](double x) {
    auto [N, D, N1, D1] = parts(x);
    double d1 = (N1 * D - N * D1) / (D * D);
    return -4.0 * am * ap / D - 2.0 * D1 * d1 / D;
  };
  quotient_detail::add_exceptional(m);
  return m;
}

// Leaf metric of a flow snapshot, interpolated by a cubic B-spline with the exact end slopes.
inline QuotientModel quotient_from_profile(const Profile& prof) {
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
  auto sp = std::make_shared<Spline>(prof.psi.data(), prof.psi.size(), -prof.beta_minus, prof.h, prof.slope_minus,
                                     -prof.slope_plus);
  QuotientModel m;
  m.kind = "profile";
  m.beta_minus = prof.beta_minus;
  m.beta_plus = prof.beta_plus;
  m.slope_minus = prof.slope_minus;
  m.slope_plus = prof.slope_plus;
  m.fiber_length = prof.fiber_length;
  m.p = quotient_detail::orbifold_order(prof.slope_minus);
  m.q = quotient_detail::orbifold_order(prof.slope_plus);
  m.psi_fn = [sp](double x) { return (*sp)(x); };
  m.dpsi_fn = [sp](double x) { return sp->prime(x); };
  m.d2psi_fn = [sp](double x) { return sp->double_prime(x); };
  quotient_detail::add_exceptional(m);
  return m;
}

// Integral of K dA by quadrature against the orbifold Euler characteristic.
struct GaussBonnetCheck {
  double integral = 0.0;
  double expected = 0.0;
  double residual = 0.0;
};

inline GaussBonnetCheck gauss_bonnet(const QuotientModel& m) {
  GaussBonnetCheck g;
  g.integral = 2.0 * kPi *
               quotient_detail::quadrature().integrate([&](double x) { return m.gauss_curvature(x); }, -m.beta_minus,
                                                       m.beta_plus, 1e-13);
  if (m.p > 0 && m.q > 0)
    g.expected = 2.0 * kPi * (2.0 - (1.0 - 1.0 / m.p) - (1.0 - 1.0 / m.q));
  else
    g.expected = kPi * (m.slope_minus + m.slope_plus);
  g.residual = std::abs(g.integral - g.expected);
  return g;
}

// Vol(M) from the fibration against the direct integral of the volume form l dx dtheta.
inline double volume_fibration_residual(const QuotientModel& m) {
  double direct = m.fiber_length * 2.0 * kPi *
                  quotient_detail::quadrature().integrate([](double) { return 1.0; }, -m.beta_minus, m.beta_plus);
  return std::abs(direct - m.volume()) / m.volume();
}

namespace quotient_detail {

// Geodesics of a surface of revolution with Clairaut constant c = Psi dtheta/ds:
// dtheta/dx = c / (Psi sqrt(Psi - c^2)), ds/dx = 1 / sqrt(Psi - c^2).
class Clairaut {
 public:
  explicit Clairaut(const QuotientModel& m) : m_(m) {}

  double meridian(double a, double b) const {
    if (a > b) std::swap(a, b);
    if (b - a <= 0.0) return 0.0;
    auto f = [&](double x, double xc) {
      double dl = xc < 0 ? -xc : x - a, dr = xc > 0 ? xc : b - x;
      double ps;
      if (a <= -m_.beta_minus && dl < 1e-9 * m_.length())
        ps = m_.slope_minus * dl;
      else if (b >= m_.beta_plus && dr < 1e-9 * m_.length())
        ps = m_.slope_plus * dr;
      else
        ps = m_.psi(x);
      return ps > 0.0 ? 1.0 / std::sqrt(ps) : 0.0;
    };
    return quadrature().integrate(f, a, b, 1e-13);
  }

  // Position on the meridian at distance s from the left pole.
  double meridian_inverse(double s) const {
    const double total = meridian(-m_.beta_minus, m_.beta_plus);
    if (s <= 0.0) return -m_.beta_minus;
    if (s >= total) return m_.beta_plus;
    auto g = [&](double x) { return meridian(-m_.beta_minus, x) - s; };
    boost::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(g, -m_.beta_minus, m_.beta_plus, -s, total - s,
                                               boost::math::tools::eps_tolerance<double>(50), it);
    return 0.5 * (r.first + r.second);
  }

  double min_sqrt_psi(double x1, double x2) const {
    double mn = std::min(m_.psi(x1), m_.psi(x2));
    const int K = 64;
    for (int k = 1; k < K; ++k) mn = std::min(mn, m_.psi(x1 + (x2 - x1) * k / K));
    return std::sqrt(std::max(mn, 0.0));
  }

  struct Arc {
    double theta = 0.0;
    double length = 0.0;
    bool ok = false;
  };

  // Monotone arc from x1 to x2 (x1 < x2).
  Arc direct(double c, double x1, double x2) const {
    Arc a;
    const double c2 = c * c;
    bool bad = false;
    auto gap = [&](double x) {
      double g = m_.psi(x) - c2;
      if (!(g > 0.0)) bad = true;
      return std::max(g, 1e-300);
    };
    try {
      a.theta = quadrature().integrate([&](double x) { return c / ((gap(x) + c2) * std::sqrt(gap(x))); }, x1, x2,
                                       1e-12);
      a.length = quadrature().integrate([&](double x) { return 1.0 / std::sqrt(gap(x)); }, x1, x2, 1e-12);
      a.ok = !bad && std::isfinite(a.theta) && std::isfinite(a.length);
    } catch (const std::exception&) {
      a.ok = false;
    }
    return a;
  }

  // First x beyond `from` in direction dir with Psi(x) = c^2.
  double turning_point(double c, double from, int dir) const {
    const double c2 = c * c;
    const double end = dir > 0 ? m_.beta_plus : -m_.beta_minus;
    const int K = 64;
    double prev = from;
    for (int k = 1; k <= K; ++k) {
      double x = from + (end - from) * k / K;
      if (m_.psi(x) - c2 <= 0.0) {
        auto g = [&](double y) { return m_.psi(y) - c2; };
        double lo = std::min(prev, x), hi = std::max(prev, x);
        double glo = g(lo), ghi = g(hi);
        if (glo == 0.0) return lo;
        if (ghi == 0.0) return hi;
        boost::uintmax_t it = 200;
        auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, boost::math::tools::eps_tolerance<double>(52),
                                                   it);
        return 0.5 * (r.first + r.second);
      }
      prev = x;
    }
    return end;
  }

  // Integrals from x0 to the turning point b of 1 / sqrt(Psi - c^2) (length) and c / (Psi sqrt(Psi - c^2))
  // (azimuth), with y = |b - x|. The length uses y = L s^2; the azimuth uses y = (c^2 / sigma) tan^2 phi,
  // sigma = |Psi'(b)|, which flattens its Lorentzian peak at the turn.
  Arc to_turn(double c, double x0, double b) const {
    Arc a;
    const double c2 = c * c, L = std::abs(b - x0), sgn = b > x0 ? 1.0 : -1.0;
    a.ok = true;
    if (L == 0.0) return a;
    const double d1 = m_.dpsi(b), d2 = m_.d2psi(b), sigma = std::abs(d1);
    if (!(sigma > 0.0)) {
      a.ok = false;
      return a;
    }
    // b is taken as the exact turning point: Psi(x) - c^2 = y q(y), with the difference quotient away from b
    // and Taylor close to it. Keeping the root residual Psi(b) - c^2 would shift each leg by 2 sqrt(residual) / sigma.
    const double pb = m_.psi(b);
    auto gap = [&](double y, double x) {
      double q = y > 1e-6 * m_.length() ? (m_.psi(x) - pb) / y : -sgn * d1 + 0.5 * d2 * y;
      return std::max(y * q, 1e-300);
    };
    auto len = [&](double s) {
      double y = L * s * s, x = b - sgn * y;
      return 2.0 * L * s / std::sqrt(gap(y, x));
    };
    const double k = c2 / sigma;
    auto azi = [&](double phi) {
      double t = std::tan(phi), y = k * t * t, x = b - sgn * y;
      double dy = 2.0 * k * t * (1.0 + t * t);
      double g = gap(y, x);
      return c * dy / ((c2 + g) * std::sqrt(g));
    };
    a.length = quadrature().integrate(len, 0.0, 1.0, 1e-12);
    a.theta = quadrature().integrate(azi, 0.0, std::atan(std::sqrt(L / k)), 1e-12);
    return a;
  }

  // Arc from x1 and x2 that turns at Psi = c^2 beyond both in direction dir.
  Arc turning(double c, double x1, double x2, int dir) const {
    Arc a;
    try {
      double from = dir > 0 ? std::max(x1, x2) : std::min(x1, x2);
      double b = turning_point(c, from, dir);
      if (std::abs(m_.dpsi(b)) < 1e-12) return a;
      Arc u = to_turn(c, x1, b), v = to_turn(c, x2, b);
      a.theta = u.theta + v.theta;
      a.length = u.length + v.length;
      if (!u.ok || !v.ok) return Arc{};
      a.ok = std::isfinite(a.theta) && std::isfinite(a.length);
    } catch (const std::exception&) {
      a.ok = false;
    }
    return a;
  }

  // Geodesic families joining two parallels, sampled in the Clairaut constant: dir 0 is the monotone
  // arc, dir +1 / -1 turns beyond both parallels.
  struct Family {
    int dir = 0;
    std::vector<double> c;
    std::vector<Arc> arcs;
  };

  struct Pair {
    double x1 = 0.0, x2 = 0.0;
    bool pole = false;
    double meridian = 0.0;
    double upper = std::numeric_limits<double>::infinity();  // through a pole
    double c_junction = 0.0;
    std::vector<Family> families;
  };

  Arc arc(const Family& f, const Pair& p, double c) const {
    if (c == 0.0) return Arc{0.0, p.meridian, f.dir == 0};
    return f.dir == 0 ? direct(c, p.x1, p.x2) : turning(c, p.x1, p.x2, f.dir);
  }

  Pair prepare(double a, double b, int samples = 12) const {
    Pair p;
    p.x1 = std::clamp(std::min(a, b), -m_.beta_minus, m_.beta_plus);
    p.x2 = std::clamp(std::max(a, b), -m_.beta_minus, m_.beta_plus);
    const double ptol = 1e-14 * m_.length();
    p.meridian = meridian(p.x1, p.x2);
    auto at_pole = [&](double x) { return x <= -m_.beta_minus + ptol || x >= m_.beta_plus - ptol; };
    p.pole = at_pole(p.x1) || at_pole(p.x2);
    if (p.pole) return p;
    p.upper = std::min(meridian(-m_.beta_minus, p.x1) + meridian(-m_.beta_minus, p.x2),
                       meridian(p.x1, m_.beta_plus) + meridian(p.x2, m_.beta_plus));
    const double cD = min_sqrt_psi(p.x1, p.x2);
    if (!(cD > 0.0)) return p;
    // smaller c are covered by the through-pole path up to O(c^2)
    const double c_lo = cD * 1e-6, c_hi = cD * (1.0 - 1e-8);
    p.c_junction = cD;
    if (p.x2 - p.x1 > ptol) {
      Family f;
      f.c = {0.0};
      for (int k = 1; k <= samples / 2; ++k) f.c.push_back(c_hi * std::sin(0.5 * kPi * k / (samples / 2)));
      for (double c : f.c) f.arcs.push_back(arc(f, p, c));
      p.families.push_back(std::move(f));
    }
    for (int dir : {+1, -1}) {
      Family f;
      f.dir = dir;
      f.c.push_back(c_lo);
      for (int k = 1; k < samples; ++k) f.c.push_back(c_lo + (c_hi - c_lo) * 0.5 * (1.0 - std::cos(kPi * k / samples)));
      f.c.push_back(c_hi);
      for (double c : f.c) f.arcs.push_back(arc(f, p, c));
      p.families.push_back(std::move(f));
    }
    return p;
  }

  // Shortest candidate with azimuth separation dth.
  double solve(const Pair& p, double dth) const {
    dth = std::fmod(std::abs(dth), 2.0 * kPi);
    if (dth > kPi) dth = 2.0 * kPi - dth;
    if (p.pole || dth <= 1e-15) return p.meridian;
    double best = p.upper;
    // meridian segment followed by a parallel arc: an admissible path
    best = std::min(best, p.meridian + std::sqrt(std::min(m_.psi(p.x1), m_.psi(p.x2))) * dth);
    for (const auto& f : p.families) {
      for (std::size_t i = 0; i + 1 < f.c.size(); ++i) {
        const Arc &a0 = f.arcs[i], &a1 = f.arcs[i + 1];
        if (!a0.ok || !a1.ok) continue;
        double f0 = a0.theta - dth, f1 = a1.theta - dth;
        if (f0 == 0.0) best = std::min(best, a0.length);
        if (f0 * f1 >= 0.0) continue;
        auto g = [&](double c) {
          Arc a = arc(f, p, c);
          return a.ok ? a.theta - dth : std::numeric_limits<double>::quiet_NaN();
        };
        try {
          boost::uintmax_t it = 100;
          auto r = boost::math::tools::toms748_solve(g, f.c[i], f.c[i + 1], f0, f1,
                                                     boost::math::tools::eps_tolerance<double>(48), it);
          Arc a = arc(f, p, 0.5 * (r.first + r.second));
          if (a.ok) best = std::min(best, a.length);
        } catch (const std::exception&) {
        }
      }
    }
    // The monotone arc meets the turning family that ends on the parallel attaining min Psi at
    // c = cD; bridge the gap there with c = cD (1 - tau^2), tau < 0 monotone, tau > 0 turning.
    if (p.families.size() == 3) {
      const Family& d = p.families[0];
      const int jdir = m_.psi(p.x2) < m_.psi(p.x1) ? +1 : -1;
      const Family& t = p.families[jdir > 0 ? 1 : 2];
      if (d.arcs.back().ok && t.arcs.back().ok) {
        double f0 = d.arcs.back().theta - dth, f1 = t.arcs.back().theta - dth;
        if (f0 * f1 < 0.0) {
          const double cD = p.c_junction, tau0 = std::sqrt(1.0 - d.c.back() / cD);
          auto at = [&](double tau) {
            double c = cD * (1.0 - tau * tau);
            return tau < 0.0 ? direct(c, p.x1, p.x2) : turning(c, p.x1, p.x2, jdir);
          };
          auto g = [&](double tau) {
            Arc a = at(tau);
            return a.ok ? a.theta - dth : std::numeric_limits<double>::quiet_NaN();
          };
          try {
            boost::uintmax_t it = 100;
            auto r = boost::math::tools::toms748_solve(g, -tau0, tau0, f0, f1,
                                                       boost::math::tools::eps_tolerance<double>(48), it);
            Arc a = at(0.5 * (r.first + r.second));
            if (a.ok) best = std::min(best, a.length);
          } catch (const std::exception&) {
          }
        }
      }
    }
    if (!std::isfinite(best)) fail(ErrorKind::ShootingNoConverge, "no geodesic candidate converged");
    return best;
  }

  double distance(LeafPoint P, LeafPoint Q) const { return solve(prepare(P.x, Q.x), P.theta - Q.theta); }

 private:
  const QuotientModel& m_;
};

}  // namespace quotient_detail

inline double transverse_distance(const QuotientModel& m, LeafPoint a, LeafPoint b) {
  return quotient_detail::Clairaut(m).distance(a, b);
}

inline double meridian_distance(const QuotientModel& m, double x1, double x2) {
  return quotient_detail::Clairaut(m).meridian(x1, x2);
}

struct DiameterReport {
  double diameter = 0.0;
  double meridian = 0.0;   // pole to pole
  double antipodal = 0.0;  // max over (x1, 0), (x2, pi)
  LeafPoint far_a, far_b;
  int net = 0;
  bool converged = false;
  std::string warning;
};

// Max distance over a net of meridian positions at opposite azimuths, doubled until stable;
// the best pair of each net is polished by a pattern search.
inline DiameterReport transverse_diameter(const QuotientModel& m, int net = 9, double tol = 1e-4, int max_net = 65) {
  DiameterReport r;
  r.net = net;
  if (net <= 1) {
    r.warning = "net too coarse: a single seed has no pairs";
    return r;
  }
  quotient_detail::Clairaut cl(m);
  r.meridian = cl.meridian(-m.beta_minus, m.beta_plus);
  const double lo = -m.beta_minus, hi = m.beta_plus;
  auto d = [&](double a, double b) {
    return cl.distance({std::clamp(a, lo, hi), 0.0}, {std::clamp(b, lo, hi), kPi});
  };
  double prev = -1.0;
  for (int n = net; n <= max_net; n = 2 * n - 1) {
    r.net = n;
    double bx1 = lo, bx2 = hi, bd = -1.0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double a = lo + (hi - lo) * i / (n - 1), b = lo + (hi - lo) * j / (n - 1);
        double v = d(a, b);
        if (v > bd) bd = v, bx1 = a, bx2 = b;
      }
    double step = (hi - lo) / (n - 1);
    while (step > 1e-7 * (hi - lo)) {
      bool moved = false;
      for (auto [da, db] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}}) {
        double a = std::clamp(bx1 + da * step, lo, hi), b = std::clamp(bx2 + db * step, lo, hi);
        double v = d(a, b);
        if (v > bd + 1e-15) {
          bd = v, bx1 = a, bx2 = b;
          moved = true;
        }
      }
      if (!moved) step *= 0.5;
    }
    r.antipodal = bd;
    r.far_a = {bx1, 0.0};
    r.far_b = {bx2, kPi};
    double cur = std::max(bd, r.meridian);
    if (prev >= 0.0 && std::abs(cur - prev) < tol) {
      r.converged = true;
      r.diameter = cur;
      break;
    }
    prev = cur;
    r.diameter = cur;
  }
  if (!r.converged) r.warning = "diameter net did not stabilize";
  return r;
}

struct AmbientBoundReport {
  int samples = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  double worst_violation = 0.0;
};

// Ambient distance estimated by sqrt(dT^2 + fiber offset^2) against the bound dT + l.
inline AmbientBoundReport ambient_distance_bound_check(const QuotientModel& m, int samples) {
  if (!(m.fiber_length > 0.0)) fail(ErrorKind::NonPositiveParameter, "fiber length must be positive");
  auto halton = [](int i, int base) {
    double f = 1.0, r = 0.0;
    for (int k = i; k > 0; k /= base) {
      f /= base;
      r += f * (k % base);
    }
    return r;
  };
  quotient_detail::Clairaut cl(m);
  AmbientBoundReport rep;
  rep.samples = samples;
  const double l = m.fiber_length;
  for (int i = 1; i <= samples; ++i) {
    LeafPoint a{-m.beta_minus + m.length() * halton(i, 2), 2.0 * kPi * halton(i, 3)};
    LeafPoint b{-m.beta_minus + m.length() * halton(i, 5), 2.0 * kPi * halton(i, 7)};
    double off = std::abs(halton(i, 11) - halton(i, 13)) * l;
    off = std::min(off, l - off);
    double dT = cl.distance(a, b);
    double slack = dT + l - std::hypot(dT, off);
    rep.worst_slack = std::min(rep.worst_slack, slack);
    rep.worst_violation = std::max(rep.worst_violation, -slack);
  }
  return rep;
}

namespace quotient_detail {

// Unit-speed geodesic from (x0, theta0) leaving at angle alpha to the meridian, run for length r.
inline LeafPoint exp_map(const QuotientModel& m, LeafPoint c, double alpha, double r) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 3>;  // x, theta, p_x
  const double s0 = std::sqrt(m.psi(c.x));
  const double cc = s0 * std::sin(alpha);
  State y{c.x, c.theta, std::cos(alpha) / s0};
  auto rhs = [&](const State& s, State& d, double) {
    double ps = std::max(m.psi(s[0]), 1e-300), dp = m.dpsi(s[0]);
    d[0] = ps * s[2];
    d[1] = cc / ps;
    d[2] = -0.5 * (dp * s[2] * s[2] - cc * cc * dp / (ps * ps));
  };
  ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-12, 1e-12), rhs, y, 0.0, r,
                          r / 16.0);
  return {y[0], y[1]};
}

// Polygon through the endpoints of the exponential map; area in dx dtheta.
inline double exp_map_area(const QuotientModel& m, LeafPoint c, double r, int M = 720) {
  std::vector<LeafPoint> pts(M);
  for (int k = 0; k < M; ++k) pts[k] = exp_map(m, c, 2.0 * kPi * k / M, r);
  double a = 0.0;
  for (int k = 0; k < M; ++k) {
    const auto& p = pts[k];
    const auto& q = pts[(k + 1) % M];
    a += p.x * q.theta - q.x * p.theta;
  }
  return 0.5 * std::abs(a);
}

// Azimuth half-width of the ball at meridian position x, assuming distance grows with |theta|.
inline double half_width(const Clairaut& cl, LeafPoint c, double x, double r) {
  auto pr = cl.prepare(c.x, x);
  if (cl.solve(pr, 0.0) >= r) return 0.0;
  if (cl.solve(pr, kPi) < r) return kPi;
  double lo = 0.0, hi = kPi;
  for (int it = 0; it < 30; ++it) {
    double mid = 0.5 * (lo + hi);
    (cl.solve(pr, mid) < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Area by sweeping meridian positions. Pieces where whole parallels lie in the ball are exact; on the rest
// the square-root edges are smoothed by x = a + L(1 - cos pi s)/2 before Gauss-Legendre.
inline double sweep_area(const QuotientModel& m, const Clairaut& cl, LeafPoint c, double r) {
  const double lo = -m.beta_minus, hi = m.beta_plus;
  const double s_to_lo = cl.meridian(lo, c.x), s_to_hi = cl.meridian(c.x, hi);
  const double xa = s_to_lo <= r ? lo : cl.meridian_inverse(s_to_lo - r);
  const double xb = s_to_hi <= r ? hi : cl.meridian_inverse(s_to_lo + r);
  auto full = [&](double x) { return cl.distance(c, {x, c.theta + kPi}) < r; };
  const int K = 32;
  std::vector<double> cuts{xa};
  bool prev = full(xa);
  double xp = xa;
  for (int k = 1; k <= K; ++k) {
    double x = xa + (xb - xa) * k / K;
    bool cur = full(x);
    if (cur != prev) {
      double a = xp, b = x;
      for (int it = 0; it < 50; ++it) {
        double mid = 0.5 * (a + b);
        (full(mid) == prev ? a : b) = mid;
      }
      cuts.push_back(0.5 * (a + b));
    }
    prev = cur;
    xp = x;
  }
  cuts.push_back(xb);
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], L = cuts[i + 1] - cuts[i];
    if (L <= 0.0) continue;
    if (full(a + 0.5 * L)) {
      area += 2.0 * kPi * L;
      continue;
    }
    auto g = [&](double s) {
      double x = a + 0.5 * L * (1.0 - std::cos(kPi * s));
      return 2.0 * half_width(cl, c, x, r) * 0.5 * L * kPi * std::sin(kPi * s);
    };
    area += boost::math::quadrature::gauss<double, 30>::integrate(g, 0.0, 1.0);
  }
  return area;
}

}  // namespace quotient_detail

// Leaf-space area of the transverse ball {y : dT(c, y) < r}.
inline double transverse_ball_area(const QuotientModel& m, LeafPoint c, double r) {
  if (!(r > 0.0)) fail(ErrorKind::NonPositiveParameter, "ball radius must be positive");
  quotient_detail::Clairaut cl(m);
  const double ptol = 1e-14 * m.length();
  if (c.x <= -m.beta_minus + ptol) return 2.0 * kPi * (cl.meridian_inverse(r) + m.beta_minus);
  if (c.x >= m.beta_plus - ptol) {
    const double total = cl.meridian(-m.beta_minus, m.beta_plus);
    return 2.0 * kPi * (m.beta_plus - cl.meridian_inverse(total - r));
  }
  const double to_pole = std::min(cl.meridian(-m.beta_minus, c.x), cl.meridian(c.x, m.beta_plus));
  if (r < 0.5 * to_pole) return quotient_detail::exp_map_area(m, c, r);
  return quotient_detail::sweep_area(m, cl, c, r);
}

// Tube volume over the ball: l times the leaf area (exceptional orbits have measure zero).
inline double transverse_ball_volume(const QuotientModel& m, LeafPoint c, double r) {
  return m.fiber_length * transverse_ball_area(m, c, r);
}

struct RatioRow {
  double r = 0.0;
  double center_x = 0.0;
  double ratio = 0.0;  // V(r) / V(r/2)
};

inline std::vector<RatioRow> volume_ratio_table(const QuotientModel& m, const std::vector<LeafPoint>& centers,
                                                const std::vector<double>& radii) {
  std::vector<RatioRow> rows;
  for (auto c : centers)
    for (double r : radii)
      rows.push_back({r, c.x, transverse_ball_volume(m, c, r) / transverse_ball_volume(m, c, 0.5 * r)});
  return rows;
}

struct QuotientReport {
  std::string kind;
  double fiber_length = 0.0;
  double cone_angle_minus = 0.0, cone_angle_plus = 0.0;
  DiameterReport diameter;
  GaussBonnetCheck gauss_bonnet;
  double volume = 0.0;
  std::vector<ExceptionalFiber> exceptional_fibers;
  std::vector<RatioRow> ratio_table;
};

inline QuotientReport quotient_report(const QuotientModel& m) {
  QuotientReport r;
  r.kind = m.kind;
  r.fiber_length = m.fiber_length;
  r.cone_angle_minus = m.cone_angle_minus();
  r.cone_angle_plus = m.cone_angle_plus();
  r.diameter = transverse_diameter(m);
  r.gauss_bonnet = gauss_bonnet(m);
  r.volume = m.volume();
  r.exceptional_fibers = m.exceptional_fibers;
  const double D = r.diameter.diameter;
  r.ratio_table = volume_ratio_table(m, {{-m.beta_minus, 0.0}, {0.5 * (m.beta_plus - m.beta_minus), 0.0}},
                                     {D / 50.0, D / 100.0, D / 200.0});
  return r;
}

struct TimedQuotient {
  double t = 0.0;
  Profile profile;
  RField u;
};

inline std::vector<TimedQuotient> quotients_of(const FlowTrajectory& tr, std::size_t stride = 1) {
  std::vector<TimedQuotient> out;
  const std::size_t n = tr.snapshots.size();
  for (std::size_t k = 0; k < n; k += std::max<std::size_t>(stride, 1))
    out.push_back({tr.snapshots[k].t, tr.metric_at(k), tr.snapshots[k].u});
  if (n > 0 && (n - 1) % std::max<std::size_t>(stride, 1) != 0)
    out.push_back({tr.snapshots[n - 1].t, tr.metric_at(n - 1), tr.snapshots[n - 1].u});
  return out;
}

struct AuditBall {
  double t = 0.0;
  double x = 0.0;
  double r = 0.0;
  double volume = 0.0;
  double R_max = 0.0;
  bool included = false;
};

struct AuditRow {
  double t = 0.0;
  double kappa = std::numeric_limits<double>::infinity();
  std::vector<double> kappa_by_radius;
  int included = 0, excluded = 0;
};

struct NonCollapsingReport {
  double C = 0.0, r0 = 0.0;
  std::vector<double> radii;
  std::vector<AuditRow> rows;
  std::vector<AuditBall> balls;
  double kappa_min = std::numeric_limits<double>::infinity();
  double kappa_trend = 1.0;  // last / first
};

// Vol(B(x, r)) / r^{2n} over balls with R^T <= C r^{-2}; the curvature check covers every x within
// meridian distance r of the center, a superset of the ball.
inline NonCollapsingReport non_collapsing_audit(const std::vector<TimedQuotient>& traj, double C, double r0,
                                                int levels = 4, const std::vector<double>& center_fractions = {
                                                                                     0.0, 0.25, 0.5, 0.75, 1.0}) {
  if (!(C > 0.0) || !(r0 > 0.0)) fail(ErrorKind::NonPositiveParameter, "audit constants must be positive");
  NonCollapsingReport rep;
  rep.C = C;
  rep.r0 = r0;
  for (int i = 0; i < levels; ++i) rep.radii.push_back(r0 * std::pow(0.5, i));
  const int n = 1;
  for (const auto& tq : traj) {
    QuotientModel m = quotient_from_profile(tq.profile);
    quotient_detail::Clairaut cl(m);
    AuditRow row;
    row.t = tq.t;
    row.kappa_by_radius.assign(levels, std::numeric_limits<double>::infinity());
    const double total = cl.meridian(-m.beta_minus, m.beta_plus);
    for (double f : center_fractions) {
      const double x = -m.beta_minus + f * m.length();
      const double s = cl.meridian(-m.beta_minus, x);
      for (int i = 0; i < levels; ++i) {
        const double r = rep.radii[i];
        double xa = cl.meridian_inverse(std::max(s - r, 0.0)), xb = cl.meridian_inverse(std::min(s + r, total));
        double Rmax = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 32; ++k) Rmax = std::max(Rmax, m.scalar_curvature(xa + (xb - xa) * k / 32.0));
        AuditBall b{tq.t, x, r, 0.0, Rmax, Rmax <= C / (r * r)};
        if (b.included) {
          b.volume = transverse_ball_volume(m, {x, 0.0}, r);
          double kap = b.volume / std::pow(r, 2 * n);
          row.kappa = std::min(row.kappa, kap);
          row.kappa_by_radius[i] = std::min(row.kappa_by_radius[i], kap);
          ++row.included;
        } else {
          ++row.excluded;
        }
        rep.balls.push_back(b);
      }
    }
    rep.kappa_min = std::min(rep.kappa_min, row.kappa);
    rep.rows.push_back(std::move(row));
  }
  if (rep.rows.size() >= 2 && std::isfinite(rep.rows.front().kappa) && std::isfinite(rep.rows.back().kappa))
    rep.kappa_trend = rep.rows.back().kappa / rep.rows.front().kappa;
  return rep;
}

struct AnnulusVolume {
  int k = 0;
  double volume = 0.0;  // Vol{2^k <= dT <= 2^{k+1}}
};

struct AnnulusPair {
  int k1 = 0, k2 = 0;
  double volume = 0.0;        // V(k1, k2)
  double inner_volume = 0.0;  // V(k1 + 2, k2 - 2)
  double ratio = 0.0;
  bool ratio_holds = false;        // ratio <= 2^{10n}
  double curvature_integral = 0.0;  // int R^T over B(k1 + 1, k2 - 1)
  double curvature_constant = 0.0;  // curvature_integral / V(k1, k2)
  double excess = 0.0;              // int (R^T - n)
  double divergence_lhs = 0.0;      // int (R_c - n), R_c = R^T / 2
  double laplacian_side = 0.0;      // -int Delta_c u
  double flux_bound = 0.0;          // sup |grad u| times the boundary sphere volumes, halved
};

struct AnnulusRow {
  double t = 0.0;
  LeafPoint base;
  int k_min = 0, k_max = 0;
  std::vector<AnnulusVolume> annuli;
  std::vector<AnnulusPair> pairs;
};

namespace quotient_detail {

// Azimuth measure of {dT(base, .) < r} on each sample of x; distance-monotone in |theta| is assumed.
class DistanceField {
 public:
  DistanceField(const QuotientModel& m, LeafPoint base, const RField& xs, int n_theta = 33)
      : m_(m), base_(base), xs_(xs), cl_(m) {
    const double ptol = 1e-14 * m.length();
    pole_ = base.x <= -m.beta_minus + ptol || base.x >= m.beta_plus - ptol;
    if (pole_) {
      // distance depends on x alone
      s_base_ = cl_.meridian(-m.beta_minus, base.x);
      for (double x : xs) s_.push_back(std::abs(cl_.meridian(-m.beta_minus, x) - s_base_));
      return;
    }
    th_.resize(n_theta);
    for (int k = 0; k < n_theta; ++k) th_[k] = kPi * k / (n_theta - 1);
    d_.assign(xs.size(), std::vector<double>(n_theta));
    for (std::size_t j = 0; j < xs.size(); ++j) {
      auto pr = cl_.prepare(base.x, xs[j]);
      for (int k = 0; k < n_theta; ++k) d_[j][k] = cl_.solve(pr, th_[k]);
      for (int k = 1; k < n_theta; ++k) d_[j][k] = std::max(d_[j][k], d_[j][k - 1]);
    }
  }

  // Measure of {theta : d < r} at sample j.
  double measure_below(std::size_t j, double r) const {
    if (pole_) {
      return s_[j] < r ? 2.0 * kPi : 0.0;
    }
    const auto& row = d_[j];
    if (r <= row.front()) return 0.0;
    if (r >= row.back()) return 2.0 * kPi;
    auto it = std::lower_bound(row.begin(), row.end(), r);
    std::size_t k = it - row.begin();
    double a = row[k - 1], b = row[k];
    double frac = b > a ? (r - a) / (b - a) : 1.0;
    return 2.0 * (th_[k - 1] + frac * (th_[k] - th_[k - 1]));
  }

  double max_distance() const {
    if (pole_) return std::max(s_base_, cl_.meridian(-m_.beta_minus, m_.beta_plus) - s_base_);
    double mx = 0.0;
    for (const auto& row : d_) mx = std::max(mx, row.back());
    return mx;
  }

  bool pole() const { return pole_; }
  double base_arclength() const { return s_base_; }
  const RField& pole_distances() const { return s_; }

 private:
  const QuotientModel& m_;
  LeafPoint base_;
  RField xs_;
  Clairaut cl_;
  bool pole_ = false;
  double s_base_ = 0.0;
  RField s_;
  RField th_;
  std::vector<std::vector<double>> d_;
};

// Integral over x of f times the exact length of {x : a <= s(x) <= b} within each cell, for f and the
// meridian arclength s(x) piecewise linear.
inline double pole_band_integral(const RField& xs, const RField& s, const RField& f, double a, double b) {
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < xs.size(); ++j) {
    double s0 = s[j], s1 = s[j + 1];
    double lo = std::max(std::min(s0, s1), a), hi = std::min(std::max(s0, s1), b);
    if (hi <= lo || s1 == s0) continue;
    double t0 = (lo - s0) / (s1 - s0), t1 = (hi - s0) / (s1 - s0);
    if (t0 > t1) std::swap(t0, t1);
    double dx = xs[j + 1] - xs[j];
    double f0 = f[j] + t0 * (f[j + 1] - f[j]), f1 = f[j] + t1 * (f[j + 1] - f[j]);
    total += 0.5 * (f0 + f1) * (t1 - t0) * dx;
  }
  return total;
}

}  // namespace quotient_detail

// Dyadic transverse annuli around argmin u: volumes, the halving ratio test and the curvature integral
// with the divergence identity int (R_c - n) = -int Delta_c u.
inline AnnulusRow annulus_report(const TimedQuotient& tq, int k_min = -6, int max_samples = 65) {
  using namespace profile_ops;
  const Profile& p = tq.profile;
  QuotientModel m = quotient_from_profile(p);
  quotient_detail::Clairaut cl(m);
  const int n = 1;
  AnnulusRow row;
  row.t = tq.t;
  row.k_min = k_min;
  const std::size_t jmin = std::min_element(tq.u.begin(), tq.u.end()) - tq.u.begin();
  row.base = {p.x[jmin], 0.0};

  RField R = scalar_curvature(p), lap = laplacian(p, tq.u), g2 = grad_norm2(p, tq.u);
  const int stride = std::max(1, (p.nodes() + max_samples - 2) / (max_samples - 1));
  RField xs, Rs, laps, grads, wx;
  for (int j = 0; j < p.nodes(); j += stride) {
    xs.push_back(p.x[j]);
    Rs.push_back(R[j]);
    laps.push_back(lap[j]);
    grads.push_back(std::sqrt(g2[j]));
  }
  if (xs.back() != p.x.back()) {
    xs.push_back(p.x.back());
    Rs.push_back(R.back());
    laps.push_back(lap.back());
    grads.push_back(std::sqrt(g2.back()));
  }
  wx.assign(xs.size(), 0.0);
  for (std::size_t j = 0; j + 1 < xs.size(); ++j) {
    wx[j] += 0.5 * (xs[j + 1] - xs[j]);
    wx[j + 1] += 0.5 * (xs[j + 1] - xs[j]);
  }
  quotient_detail::DistanceField field(m, row.base, xs);
  const RField& s_of_x = field.pole_distances();
  const double l = m.fiber_length;
  // integral of f dV over {a <= d <= b}
  auto band = [&](const RField& f, double a, double b) {
    if (field.pole()) return l * 2.0 * kPi * quotient_detail::pole_band_integral(xs, s_of_x, f, a, b);
    double s = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j)
      s += wx[j] * f[j] * (field.measure_below(j, b) - field.measure_below(j, a));
    return l * s;
  };
  const RField ones(xs.size(), 1.0);
  auto vol = [&](double a, double b) { return band(ones, a, b); };
  auto sphere = [&](double r) {
    const double e = 0.02;
    return vol(r * (1.0 - e), r * (1.0 + e)) / (2.0 * e * r);
  };
  const double dmax = field.max_distance();
  row.k_max = static_cast<int>(std::floor(std::log2(dmax)));
  for (int k = k_min; k <= row.k_max; ++k) {
    double v = vol(std::ldexp(1.0, k), std::ldexp(1.0, k + 1));
    if (v > 0.0) row.annuli.push_back({k, v});
  }
  RField Rc_minus_n(xs.size()), R_minus_n(xs.size()), neg_lap_c(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) {
    R_minus_n[j] = Rs[j] - n;
    Rc_minus_n[j] = 0.5 * Rs[j] - n;
    neg_lap_c[j] = -0.5 * laps[j];
  }
  for (int k1 = k_min; k1 <= row.k_max + 1; ++k1)
    for (int k2 = k1 + 5; k2 <= row.k_max + 1; ++k2) {
      AnnulusPair a;
      a.k1 = k1;
      a.k2 = k2;
      const double r1 = std::ldexp(1.0, k1), r2 = std::ldexp(1.0, k2);
      a.volume = vol(r1, r2);
      a.inner_volume = vol(std::ldexp(1.0, k1 + 2), std::ldexp(1.0, k2 - 2));
      a.ratio = a.inner_volume > 0.0 ? a.volume / a.inner_volume : std::numeric_limits<double>::infinity();
      a.ratio_holds = a.ratio <= std::ldexp(1.0, 10 * n);
      const double q1 = std::ldexp(1.0, k1 + 1), q2 = std::ldexp(1.0, k2 - 1);
      a.curvature_integral = band(Rs, q1, q2);
      a.curvature_constant = a.volume > 0.0 ? a.curvature_integral / a.volume : 0.0;
      a.excess = band(R_minus_n, q1, q2);
      a.divergence_lhs = band(Rc_minus_n, q1, q2);
      a.laplacian_side = band(neg_lap_c, q1, q2);
      double gmax = 0.0;
      for (std::size_t j = 0; j < xs.size(); ++j) gmax = std::max(gmax, grads[j]);
      a.flux_bound = 0.5 * gmax * (sphere(q1) + sphere(q2));
      row.pairs.push_back(a);
    }
  return row;
}

inline std::vector<AnnulusRow> annulus_diagnostics(const std::vector<TimedQuotient>& traj, int k_min = -6) {
  std::vector<AnnulusRow> out;
  for (const auto& tq : traj) out.push_back(annulus_report(tq, k_min));
  return out;
}

}  // namespace sasaki
