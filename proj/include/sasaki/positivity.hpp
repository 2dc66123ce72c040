#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <random>

#include "sasaki/entropy.hpp"
#include "sasaki/flow.hpp"
#include "sasaki/metric.hpp"

namespace sasaki {

// A tensor with the symmetries of R_{i jbar k lbar} together with the metric it refers to.
using CurvatureTypeTensor = CurvatureSample;

namespace positivity_detail {

inline std::size_t at(int n, int i, int j, int k, int l) { return ((i * n + j) * n + k) * n + l; }

// S(V, conj W, U, conj Z) = sum S_{i jbar k lbar} V^i conj(W^j) U^k conj(Z^l).
inline cplx contract(const std::vector<cplx>& S, int n, const Eigen::VectorXcd& V, const Eigen::VectorXcd& W,
                     const Eigen::VectorXcd& U, const Eigen::VectorXcd& Z) {
  cplx s = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      cplx vw = V[i] * std::conj(W[j]);
      if (vw == cplx(0)) continue;
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += S[at(n, i, j, k, l)] * vw * U[k] * std::conj(Z[l]);
    }
  return s;
}

inline double norm2(const Eigen::MatrixXcd& g, const Eigen::VectorXcd& V) {
  return (V.transpose() * g * V.conjugate())(0, 0).real();
}

// Columns e_a with sum g_{i jbar} e_a^i conj(e_b^j) = delta_ab, by Gram-Schmidt on the coordinate basis.
inline Eigen::MatrixXcd unitary_frame(const Eigen::MatrixXcd& g) {
  const int n = static_cast<int>(g.rows());
  auto ip = [&](const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a.transpose() * g * b.conjugate())(0, 0); };
  const double scale = g.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorKind::FrameDegenerate, "metric is zero or not finite");
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
    e[a] = 1.0;
    for (int b = 0; b < a; ++b) e -= ip(e, E.col(b)) * E.col(b);
    double nn = ip(e, e).real();
    if (!(nn > 1e-13 * scale) || !std::isfinite(nn))
      fail(ErrorKind::FrameDegenerate, "Gram-Schmidt lost rank at column " + std::to_string(a));
    E.col(a) = e / std::sqrt(nn);
  }
  return E;
}

// Components in the frame E: S'_{abcd} = S(e_a, conj e_b, e_c, conj e_d), one index at a time.
inline std::vector<cplx> to_frame(const std::vector<cplx>& S, int n, const Eigen::MatrixXcd& E) {
  std::vector<cplx> cur = S, next(S.size());
  for (int slot = 0; slot < 4; ++slot) {
    const bool barred = slot % 2 == 1;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            int idx[4] = {i, j, k, l};
            cplx s = 0;
            for (int m = 0; m < n; ++m) {
              int src[4] = {i, j, k, l};
              src[slot] = m;
              cplx c = E(m, idx[slot]);
              s += cur[at(n, src[0], src[1], src[2], src[3])] * (barred ? std::conj(c) : c);
            }
            next[at(n, i, j, k, l)] = s;
          }
    std::swap(cur, next);
  }
  return cur;
}

inline double unit_bisectional(const std::vector<cplx>& S, int n, const Eigen::VectorXcd& v, const Eigen::VectorXcd& u) {
  return contract(S, n, v, v, u, u).real() / (v.squaredNorm() * u.squaredNorm());
}

// Hermitian matrix M with S(v, conj v, u, conj u) = v^H M v, in an orthonormal frame.
inline Eigen::MatrixXcd form_in_v(const std::vector<cplx>& S, int n, const Eigen::VectorXcd& u) {
  Eigen::MatrixXcd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      cplx s = 0;
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += S[at(n, i, j, k, l)] * u[k] * std::conj(u[l]);
      M(j, i) = s;
    }
  return M;
}

inline Eigen::MatrixXcd form_in_u(const std::vector<cplx>& S, int n, const Eigen::VectorXcd& v) {
  Eigen::MatrixXcd M(n, n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      cplx s = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += S[at(n, i, j, k, l)] * v[i] * std::conj(v[j]);
      M(l, k) = s;
    }
  return M;
}

inline double radical_inverse(std::uint64_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

inline int nth_prime(int k) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  return primes[k % 16];
}

// Halton point i mapped to a pair of unit vectors in C^n.
inline std::pair<Eigen::VectorXcd, Eigen::VectorXcd> halton_pair(std::uint64_t i, int n) {
  Eigen::VectorXcd v(n), u(n);
  int d = 0;
  auto next = [&] { return 2.0 * radical_inverse(i + 1, nth_prime(d++)) - 1.0; };
  for (int a = 0; a < n; ++a) v[a] = cplx(next(), next());
  for (int a = 0; a < n; ++a) u[a] = cplx(next(), next());
  if (v.norm() < 1e-3) v[0] += 1.0;
  if (u.norm() < 1e-3) u[n - 1] += 1.0;
  return {v.normalized(), u.normalized()};
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace positivity_detail

// R(V, conj V; U, conj U) / (|V|^2 |U|^2) for coordinate vectors V, U.
inline double bisectional(const CurvatureTypeTensor& s, const Eigen::VectorXcd& V, const Eigen::VectorXcd& U) {
  using namespace positivity_detail;
  const int n = s.n();
  if (V.size() != n || U.size() != n) fail(ErrorKind::ZeroVector, "vector has the wrong dimension");
  double nv = norm2(s.g, V), nu = norm2(s.g, U);
  if (!(nv > 0.0) || !(nu > 0.0)) fail(ErrorKind::ZeroVector, "bisectional curvature needs nonzero vectors");
  return contract(s.riem, n, V, V, U, U).real() / (nv * nu);
}

struct BisectionalMin {
  double value = 0.0;
  Eigen::VectorXcd V, U;  // coordinate vectors, unit for the local metric
  std::size_t point = 0;
};

// Minimum over 128 Halton pairs, refined by 20 projected gradient steps on the product of unit spheres.
// A positive value certifies positivity on this sample net only.
inline BisectionalMin min_bisectional(const CurvatureTypeTensor& s, int pairs = 128, int refine = 20) {
  using namespace positivity_detail;
  const int n = s.n();
  Eigen::MatrixXcd E = unitary_frame(s.g);
  std::vector<cplx> S = to_frame(s.riem, n, E);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXcd bv, bu;
  for (int i = 0; i < pairs; ++i) {
    auto [v, u] = halton_pair(static_cast<std::uint64_t>(i), n);
    double f = unit_bisectional(S, n, v, u);
    if (f < best) {
      best = f;
      bv = v;
      bu = u;
    }
  }
  double scale = 0.0;
  for (auto c : S) scale = std::max(scale, std::abs(c));
  double eta = scale > 0.0 ? 0.5 / scale : 1.0;
  for (int it = 0; it < refine; ++it) {
    Eigen::MatrixXcd Mv = form_in_v(S, n, bu), Mu = form_in_u(S, n, bv);
    Eigen::VectorXcd gv = Mv * bv - best * bv, gu = Mu * bu - best * bu;
    if (gv.norm() + gu.norm() < 1e-15 * (1.0 + scale)) break;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, eta *= 0.5) {
      Eigen::VectorXcd v = (bv - eta * gv).normalized(), u = (bu - eta * gu).normalized();
      double f = unit_bisectional(S, n, v, u);
      if (f < best) {
        best = f;
        bv = v;
        bu = u;
        moved = true;
        eta *= 2.0;
        break;
      }
    }
    if (!moved) break;
  }
  BisectionalMin r;
  r.value = best;
  r.V = E * bv;
  r.U = E * bu;
  return r;
}

// Over grid points at least `margin` nodes from every open side.
inline BisectionalMin min_bisectional(const TransverseMetricField& m, const CurvatureField& c, int pairs = 128,
                                      int refine = 20, int margin = 0) {
  BisectionalMin best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (margin > 0 && !m.grid().interior(p, margin)) continue;
    auto r = min_bisectional(sample_at(m, c, p), pairs, refine);
    if (r.value < best.value) {
      best = r;
      best.point = p;
    }
  }
  return best;
}

// Reaction term F(S)(X, conj X; Y, conj Y) for coordinate vectors X, Y, assembled in an orthonormal frame:
//   sum S(X,Xb,m,nb) S(n,mb,Y,Yb) - sum |S(X,mb,Y,nb)|^2 + sum |S(X,Yb,m,nb)|^2
//   - Re sum (Ric(X,mb) S(m,Xb,Y,Yb) + Ric(Y,mb) S(X,Xb,m,Yb)).
inline double reaction_F(const CurvatureTypeTensor& s, const Eigen::VectorXcd& X, const Eigen::VectorXcd& Y) {
  using namespace positivity_detail;
  const int n = s.n();
  Eigen::MatrixXcd E = unitary_frame(s.g);
  std::vector<cplx> S = to_frame(s.riem, n, E);
  Eigen::VectorXcd x = E.partialPivLu().solve(X), y = E.partialPivLu().solve(Y);
  Eigen::MatrixXcd ric = Eigen::MatrixXcd::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int m = 0; m < n; ++m) ric(a, b) += S[at(n, a, b, m, m)];
  Eigen::MatrixXcd A(n, n), B(n, n), C(n, n), D(n, n);
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      cplx a = 0, b = 0, c = 0, d = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          a += S[at(n, i, j, m, k)] * x[i] * std::conj(x[j]);
          b += S[at(n, m, k, i, j)] * y[i] * std::conj(y[j]);
          c += S[at(n, i, m, j, k)] * x[i] * y[j];
          d += S[at(n, i, j, m, k)] * x[i] * std::conj(y[j]);
        }
      A(m, k) = a;  // S(x, xb, m, kb)
      B(m, k) = b;  // S(m, kb, y, yb)
      C(m, k) = c;  // S(x, mb, y, kb)
      D(m, k) = d;  // S(x, yb, m, kb)
    }
  cplx t1 = 0, t4 = 0;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) t1 += A(m, k) * B(k, m);
  for (int m = 0; m < n; ++m) {
    cplx rx = 0, ry = 0, sx = 0, sy = 0;
    for (int a = 0; a < n; ++a) {
      rx += ric(a, m) * x[a];
      ry += ric(a, m) * y[a];
    }
    // S(m, xb, y, yb) and S(x, xb, m, yb)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          sx += S[at(n, m, i, k, l)] * std::conj(x[i]) * y[k] * std::conj(y[l]);
          sy += S[at(n, i, k, m, l)] * x[i] * std::conj(x[k]) * std::conj(y[l]);
        }
    t4 += rx * sx + ry * sy;
  }
  return t1.real() - C.squaredNorm() + D.squaredNorm() - t4.real();
}

// F(S) at every point for the pair (X, Y) normalized to unit length in the local metric.
inline RField reaction_F(const TransverseMetricField& m, const CurvatureField& c, const Eigen::VectorXcd& X,
                         const Eigen::VectorXcd& Y) {
  RField out(m.size());
  for (std::size_t p = 0; p < m.size(); ++p) {
    auto s = sample_at(m, c, p);
    double nx = positivity_detail::norm2(s.g, X), ny = positivity_detail::norm2(s.g, Y);
    if (!(nx > 0.0) || !(ny > 0.0)) fail(ErrorKind::ZeroVector, "reaction term needs nonzero vectors");
    out[p] = reaction_F(s, X / std::sqrt(nx), Y / std::sqrt(ny));
  }
  return out;
}

struct NullVectorReport {
  double worst = std::numeric_limits<double>::infinity();
  int counted = 0;
  int excluded_hypothesis = 0;  // S(X, Xb; Y, Yb) > 0: outside the statement
  int excluded_psd = 0;         // failed the eigenvalue re-check
  int worst_trial = -1;
};

struct NullVectorOptions {
  int forms = 0;             // rank of the Gram sum; 0 means n(n+1)/2 + 1
  int violate_every = 0;     // every k-th trial skips the null projection
  double null_tol = 1e-12;   // relative threshold on S(X, Xb; Y, Yb)
};

namespace positivity_detail {

// S = sum_a A_a (x) conj(A_a) with symmetric A_a, so S(V, Vb; U, Ub) = sum |A_a(V, U)|^2.
// Each A_a is projected so that A_a(X, Y) = 0 unless the trial is meant to violate the hypothesis.
inline CurvatureTypeTensor null_pair_tensor(std::mt19937_64& rng, int n, Eigen::VectorXcd& X, Eigen::VectorXcd& Y,
                                            int forms, bool project) {
  std::normal_distribution<double> N01;
  auto gauss = [&](int m) {
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v[i] = cplx(N01(rng), N01(rng));
    return v;
  };
  X = gauss(n).normalized();
  Y = gauss(n).normalized();
  Eigen::MatrixXcd sXY = 0.5 * (X * Y.transpose() + Y * X.transpose());
  const double s2 = sXY.squaredNorm();
  CurvatureTypeTensor S;
  S.g = Eigen::MatrixXcd::Identity(n, n);
  S.riem.assign(n * n * n * n, cplx(0));
  for (int f = 0; f < forms; ++f) {
    Eigen::MatrixXcd A(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) A(i, k) = cplx(N01(rng), N01(rng));
    A = 0.5 * (A + A.transpose()).eval();
    if (project) {
      cplx c = (A.cwiseProduct(sXY)).sum() / s2;
      A -= c * sXY.conjugate();
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) S.riem[at(n, i, j, k, l)] += A(i, k) * std::conj(A(j, l));
  }
  double scale = 0.0;
  for (auto c : S.riem) scale = std::max(scale, std::abs(c));
  // a fully projected ensemble (n = 1) leaves only rounding noise
  for (auto& c : S.riem) c = scale > 1e-10 ? c / scale : cplx(0);
  return S;
}

// Smallest eigenvalue of the Hermitian form Q[(i,k),(j,l)] = S_{i jbar k lbar} on C^n (x) C^n.
inline double tensor_form_min_eigenvalue(const CurvatureTypeTensor& S) {
  const int n = S.n();
  Eigen::MatrixXcd Q(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) Q(j * n + l, i * n + k) = S.riem[at(n, i, j, k, l)];
  Q = 0.5 * (Q + Q.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Q, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace positivity_detail

// Monte-Carlo check that F(S)(X, Xb; Y, Yb) >= 0 whenever S >= 0 vanishes on (X, Y). Trial k draws from its
// own stream seeded by the master seed and k.
inline NullVectorReport null_vector_test(int trials, int n, std::uint64_t seed, const NullVectorOptions& opt = {}) {
  using namespace positivity_detail;
  if (trials < 1) fail(ErrorKind::NonPositiveParameter, "null vector test needs at least one trial");
  if (n < 1) fail(ErrorKind::NonPositiveParameter, "dimension must be positive");
  const int forms = opt.forms > 0 ? opt.forms : n * (n + 1) / 2 + 1;
  NullVectorReport rep;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(t))));
    Eigen::VectorXcd X, Y;
    bool project = !(opt.violate_every > 0 && t % opt.violate_every == 0);
    auto S = null_pair_tensor(rng, n, X, Y, forms, project);
    if (tensor_form_min_eigenvalue(S) < -1e-12) {
      ++rep.excluded_psd;
      continue;
    }
    if (contract(S.riem, n, X, X, Y, Y).real() > opt.null_tol) {
      ++rep.excluded_hypothesis;
      continue;
    }
    double f = reaction_F(S, X, Y);
    ++rep.counted;
    if (f < rep.worst) {
      rep.worst = f;
      rep.worst_trial = t;
    }
  }
  return rep;
}

// max |R_{i jbar k lbar} - c (g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar})| over points and components.
inline double constant_curvature_deviation(const CurvatureTypeTensor& s, double c = 2.0) {
  auto model = space_form_tensor(s.g, c);
  double d = 0.0;
  for (std::size_t a = 0; a < model.size(); ++a) d = std::max(d, std::abs(s.riem[a] - model[a]));
  return d;
}

inline double constant_curvature_deviation(const TransverseMetricField& m, const CurvatureField& curv, double c = 2.0,
                                           int margin = 0) {
  double d = 0.0;
  for (std::size_t p = 0; p < m.size(); ++p)
    if (margin <= 0 || m.grid().interior(p, margin))
      d = std::max(d, constant_curvature_deviation(sample_at(m, curv, p), c));
  return d;
}

// Leaf of an axisymmetric profile (n = 1): the normalized R_{1 1bar 1 1bar} is the Gauss curvature -Psi''/2.
inline RField leaf_bisectional(const Profile& p) {
  RField k = profile_ops::d2(p.psi, p.h);
  for (auto& v : k) v *= -0.5;
  return k;
}

inline double constant_curvature_deviation(const Profile& p, double c = 2.0) {
  double d = 0.0;
  for (double k : leaf_bisectional(p)) d = std::max(d, std::abs(k - 2.0 * c));
  return d;
}

struct SolitonResidual {
  double einstein = 0.0;  // max |R_{i jbar} + f_{i jbar} - g_{i jbar} / tau| in the metric norm
  double holo = 0.0;      // max |f_{ij}|
};

// Nodal second-order form: Delta f = Psi f'' + Psi' f' and R = -Psi'', one-sided at the ends.
inline SolitonResidual soliton_residual(const Profile& p, const RField& f, double tau = 1.0) {
  using namespace profile_ops;
  if (static_cast<int>(f.size()) != p.nodes()) fail(ErrorKind::NonPositiveParameter, "f does not match the grid");
  if (!(tau > 0.0)) fail(ErrorKind::NonPositiveTau, "tau must be positive");
  RField dpsi = d1(p.psi, p.h), ddpsi = d2(p.psi, p.h), df = d1(f, p.h), ddf = d2(f, p.h);
  SolitonResidual r;
  for (int j = 0; j < p.nodes(); ++j) {
    double lap = p.psi[j] * ddf[j] + dpsi[j] * df[j];
    r.einstein = std::max(r.einstein, std::abs(-0.5 * ddpsi[j] + 0.5 * lap - 1.0 / tau));
    r.holo = std::max(r.holo, std::abs(0.5 * p.psi[j] * ddf[j]));
  }
  return r;
}

// Candidate soliton potential f = -log w^2 from the Kahler-normalized entropy minimizer at scale tau.
inline RField soliton_potential(const Profile& p, double tau = 1.0, const MinimizerOptions& opt = {1e-9, 0}) {
  auto rep = mu_minimize(entropy_geometry(p), tau, EntropyConvention::kahler, opt);
  RField f(rep.minimizer_w.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = -std::log(rep.minimizer_w[j] * rep.minimizer_w[j]);
  return f;
}

struct PositivityRow {
  double t = 0.0;
  double min_bisectional = 0.0;
  double argmin_x = 0.0;
  double soliton_einstein = std::numeric_limits<double>::quiet_NaN();
  double soliton_holo = std::numeric_limits<double>::quiet_NaN();
};

struct PositivityReport {
  std::vector<PositivityRow> rows;
  bool starts_nonnegative = false;
  bool starts_positive_somewhere = false;
  bool stays_nonnegative = true;        // min >= -tol at every checkpoint (meaningful when starts_nonnegative)
  double first_positive_time = std::numeric_limits<double>::quiet_NaN();
  bool sign_change = false;
  double tol = 1e-8;
};

struct PositivityOptions {
  double tol = 1e-8;
  int soliton_every = 0;  // 0: soliton columns only at the last checkpoint; k: every k-th and the last
  MinimizerOptions minimizer{1e-9, 0};
};

// Minimum bisectional curvature per checkpoint of an axisymmetric run, where it is the leaf Gauss curvature.
inline PositivityReport positivity_monitor(const FlowTrajectory& tr, const PositivityOptions& opt = {}) {
  PositivityReport rep;
  rep.tol = opt.tol;
  const std::size_t K = tr.snapshots.size();
  for (std::size_t k = 0; k < K; ++k) {
    Profile p = tr.metric_at(k);
    RField bis = leaf_bisectional(p);
    auto it = std::min_element(bis.begin(), bis.end());
    PositivityRow row;
    row.t = tr.snapshots[k].t;
    row.min_bisectional = *it;
    row.argmin_x = p.x[static_cast<std::size_t>(it - bis.begin())];
    if (k == 0) {
      rep.starts_nonnegative = *it >= -opt.tol;
      rep.starts_positive_somewhere = profile_ops::max_of(bis) > opt.tol;
    }
    const bool want = k + 1 == K || (opt.soliton_every > 0 && k % opt.soliton_every == 0);
    if (want) {
      auto f = soliton_potential(p, tr.snapshots[k].tau, opt.minimizer);
      auto r = soliton_residual(p, f, tr.snapshots[k].tau);
      row.soliton_einstein = r.einstein;
      row.soliton_holo = r.holo;
    }
    if (row.min_bisectional < -opt.tol) rep.stays_nonnegative = false;
    if (k > 0 && std::isnan(rep.first_positive_time) && row.min_bisectional > 0.0) rep.first_positive_time = row.t;
    if (k > 0 && ((rep.rows.back().min_bisectional < 0.0) != (row.min_bisectional < 0.0))) rep.sign_change = true;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty() && rep.rows.front().min_bisectional > 0.0) rep.first_positive_time = rep.rows.front().t;
  return rep;
}

}  // namespace sasaki
