#pragma once

#include <bit>
#include <optional>
#include <random>

#include "sasaki/metric.hpp"

namespace sasaki {

// Basic (p,q)-form: coefficients phi_{A Bbar} over increasing multi-indices, stored as bitmasks.
// phi = sum_{A,B increasing} phi_{A Bbar} dz^A ^ dzbar^B.
struct BasicForm {
  int n = 1, p = 0, q = 0;
  std::vector<unsigned> A, B;
  std::vector<CField> c;  // c[a * B.size() + b]

  std::size_t points() const { return c.empty() ? 0 : c[0].size(); }
  CField& at(std::size_t a, std::size_t b) { return c[a * B.size() + b]; }
  const CField& at(std::size_t a, std::size_t b) const { return c[a * B.size() + b]; }
};

namespace hodge_detail {

inline std::vector<unsigned> masks(int n, int k) {
  std::vector<unsigned> out;
  for (unsigned m = 0; m < (1u << n); ++m)
    if (std::popcount(m) == k) out.push_back(m);
  return out;
}

inline int index_of(const std::vector<unsigned>& list, unsigned m) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == m) return static_cast<int>(i);
  return -1;
}

inline std::vector<int> bits(unsigned m) {
  std::vector<int> v;
  for (int i = 0; m; ++i, m >>= 1)
    if (m & 1u) v.push_back(i);
  return v;
}

// Sign of sorting the concatenation (X, Y); 0 if they overlap.
inline int merge_sign(unsigned X, unsigned Y) {
  if (X & Y) return 0;
  int inv = 0;
  for (int y : bits(Y)) inv += std::popcount(X >> (y + 1));
  return (inv & 1) ? -1 : 1;
}

// (dz^A dzbar^B) ^ (dz^C dzbar^D) = sign dz^{A+C} dzbar^{B+D}
inline int wedge_sign(unsigned A, unsigned B, unsigned C, unsigned D) {
  int s = merge_sign(A, C) * merge_sign(B, D);
  if ((std::popcount(B) * std::popcount(C)) & 1) s = -s;
  return s;
}

// Sign and mask of an ordered index tuple; sign 0 if an index repeats.
inline std::pair<int, unsigned> sort_tuple(const std::vector<int>& t) {
  unsigned m = 0;
  int inv = 0;
  for (std::size_t a = 0; a < t.size(); ++a) {
    if (m & (1u << t[a])) return {0, 0};
    m |= 1u << t[a];
    for (std::size_t b = a + 1; b < t.size(); ++b)
      if (t[a] > t[b]) ++inv;
  }
  return {(inv & 1) ? -1 : 1, m};
}

}  // namespace hodge_detail

inline BasicForm zero_form(int n, int p, int q, std::size_t points) {
  if (p < 0 || q < 0) fail(ErrorKind::DegreeUnderflow, "negative bidegree");
  if (p > n || q > n) fail(ErrorKind::DegreeOverflow, "bidegree exceeds complex dimension");
  BasicForm f;
  f.n = n;
  f.p = p;
  f.q = q;
  f.A = hodge_detail::masks(n, p);
  f.B = hodge_detail::masks(n, q);
  f.c.assign(f.A.size() * f.B.size(), CField(points, cplx(0)));
  return f;
}

inline BasicForm function_form(int n, const CField& f) {
  BasicForm out = zero_form(n, 0, 0, f.size());
  out.c[0] = f;
  return out;
}

// Component of the full antisymmetric tensor at ordered tuples (a..., b...).
inline cplx component(const BasicForm& f, const std::vector<int>& a, const std::vector<int>& b, std::size_t p) {
  auto [sa, ma] = hodge_detail::sort_tuple(a);
  auto [sb, mb] = hodge_detail::sort_tuple(b);
  if (sa == 0 || sb == 0) return 0;
  int ia = hodge_detail::index_of(f.A, ma), ib = hodge_detail::index_of(f.B, mb);
  return static_cast<double>(sa * sb) * f.at(ia, ib)[p];
}

inline BasicForm operator+(BasicForm x, const BasicForm& y) {
  for (std::size_t k = 0; k < x.c.size(); ++k)
    for (std::size_t p = 0; p < x.c[k].size(); ++p) x.c[k][p] += y.c[k][p];
  return x;
}
inline BasicForm operator-(BasicForm x, const BasicForm& y) {
  for (std::size_t k = 0; k < x.c.size(); ++k)
    for (std::size_t p = 0; p < x.c[k].size(); ++p) x.c[k][p] -= y.c[k][p];
  return x;
}
inline BasicForm operator*(cplx s, BasicForm x) {
  for (auto& comp : x.c)
    for (auto& v : comp) v *= s;
  return x;
}

inline double max_abs(const BasicForm& f, const std::vector<bool>* mask = nullptr) {
  double m = 0;
  for (const auto& comp : f.c)
    for (std::size_t p = 0; p < comp.size(); ++p)
      if (!mask || (*mask)[p]) m = std::max(m, std::abs(comp[p]));
  return m;
}

inline BasicForm del_B(const TransverseMetricField& m, const BasicForm& f) {
  const auto& ch = *m.source_chart;
  BasicForm out = zero_form(f.n, f.p + 1, f.q, f.points());
  for (std::size_t a = 0; a < f.A.size(); ++a)
    for (std::size_t b = 0; b < f.B.size(); ++b)
      for (int i = 0; i < f.n; ++i) {
        int s = hodge_detail::wedge_sign(1u << i, 0, f.A[a], f.B[b]);
        if (!s) continue;
        CField d = dz(f.at(a, b), ch.grid, i, ch.stencil);
        CField& dst = out.at(hodge_detail::index_of(out.A, f.A[a] | (1u << i)), b);
        for (std::size_t p = 0; p < d.size(); ++p) dst[p] += static_cast<double>(s) * d[p];
      }
  return out;
}

inline BasicForm delbar_B(const TransverseMetricField& m, const BasicForm& f) {
  const auto& ch = *m.source_chart;
  BasicForm out = zero_form(f.n, f.p, f.q + 1, f.points());
  for (std::size_t a = 0; a < f.A.size(); ++a)
    for (std::size_t b = 0; b < f.B.size(); ++b)
      for (int j = 0; j < f.n; ++j) {
        int s = hodge_detail::wedge_sign(0, 1u << j, f.A[a], f.B[b]);
        if (!s) continue;
        CField d = dzbar(f.at(a, b), ch.grid, j, ch.stencil);
        CField& dst = out.at(a, hodge_detail::index_of(out.B, f.B[b] | (1u << j)));
        for (std::size_t p = 0; p < d.size(); ++p) dst[p] += static_cast<double>(s) * d[p];
      }
  return out;
}

// Covariant derivative in direction i (unbarred). Extra derivative slots are never corrected here,
// so the routine composes into second derivatives.
inline BasicForm nabla(const TransverseMetricField& m, const BasicForm& f, int i) {
  const auto& ch = *m.source_chart;
  BasicForm out = f;
  const int n = f.n;
  for (std::size_t a = 0; a < f.A.size(); ++a) {
    std::vector<int> Aidx = hodge_detail::bits(f.A[a]);
    for (std::size_t b = 0; b < f.B.size(); ++b) {
      out.at(a, b) = dz(f.at(a, b), ch.grid, i, ch.stencil);
      CField& dst = out.at(a, b);
      for (std::size_t s = 0; s < Aidx.size(); ++s)
        for (int mm = 0; mm < n; ++mm) {
          std::vector<int> t = Aidx;
          t[s] = mm;
          auto [sg, mask] = hodge_detail::sort_tuple(t);
          if (!sg) continue;
          const CField& src = f.at(hodge_detail::index_of(f.A, mask), b);
          const CField& gam = m.christoffel[(mm * n + i) * n + Aidx[s]];
          for (std::size_t p = 0; p < dst.size(); ++p) dst[p] -= static_cast<double>(sg) * gam[p] * src[p];
        }
    }
  }
  return out;
}

inline BasicForm nabla_bar(const TransverseMetricField& m, const BasicForm& f, int j) {
  const auto& ch = *m.source_chart;
  BasicForm out = f;
  const int n = f.n;
  for (std::size_t b = 0; b < f.B.size(); ++b) {
    std::vector<int> Bidx = hodge_detail::bits(f.B[b]);
    for (std::size_t a = 0; a < f.A.size(); ++a) {
      out.at(a, b) = dzbar(f.at(a, b), ch.grid, j, ch.stencil);
      CField& dst = out.at(a, b);
      for (std::size_t s = 0; s < Bidx.size(); ++s)
        for (int mm = 0; mm < n; ++mm) {
          std::vector<int> t = Bidx;
          t[s] = mm;
          auto [sg, mask] = hodge_detail::sort_tuple(t);
          if (!sg) continue;
          const CField& src = f.at(a, hodge_detail::index_of(f.B, mask));
          const CField& gam = m.christoffel[(mm * n + j) * n + Bidx[s]];
          for (std::size_t p = 0; p < dst.size(); ++p) dst[p] -= static_cast<double>(sg) * std::conj(gam[p]) * src[p];
        }
    }
  }
  return out;
}

// h^{i jbar} = 2 g^{i jbar}: inverse of the Hermitian metric whose Kaehler form is 1/2 d eta.
inline cplx h_inv(const TransverseMetricField& m, int i, int j, std::size_t p) { return 2.0 * m.g_inv[i * m.n + j][p]; }

inline BasicForm delbar_star(const TransverseMetricField& m, const BasicForm& psi) {
  if (psi.q < 1) fail(ErrorKind::DegreeUnderflow, "delbar adjoint needs q >= 1");
  const int n = psi.n;
  const std::size_t P = psi.points();
  BasicForm out = zero_form(n, psi.p, psi.q - 1, P);
  const double sign = (psi.p & 1) ? 1.0 : -1.0;  // -(-1)^p
  std::vector<BasicForm> D;
  for (int i = 0; i < n; ++i) D.push_back(nabla(m, psi, i));
  for (std::size_t a = 0; a < out.A.size(); ++a) {
    std::vector<int> Aidx = hodge_detail::bits(out.A[a]);
    for (std::size_t b = 0; b < out.B.size(); ++b) {
      std::vector<int> Bidx = hodge_detail::bits(out.B[b]);
      CField& dst = out.at(a, b);
      for (int j = 0; j < n; ++j) {
        std::vector<int> t{j};
        t.insert(t.end(), Bidx.begin(), Bidx.end());
        auto [sg, mask] = hodge_detail::sort_tuple(t);
        if (!sg) continue;
        int bi = hodge_detail::index_of(psi.B, mask);
        for (int i = 0; i < n; ++i) {
          const CField& src = D[i].at(a, bi);
          for (std::size_t p = 0; p < P; ++p) dst[p] += sign * sg * h_inv(m, i, j, p) * src[p];
        }
      }
    }
  }
  return out;
}

inline BasicForm del_star(const TransverseMetricField& m, const BasicForm& psi) {
  if (psi.p < 1) fail(ErrorKind::DegreeUnderflow, "del adjoint needs p >= 1");
  const int n = psi.n;
  const std::size_t P = psi.points();
  BasicForm out = zero_form(n, psi.p - 1, psi.q, P);
  std::vector<BasicForm> D;
  for (int j = 0; j < n; ++j) D.push_back(nabla_bar(m, psi, j));
  for (std::size_t a = 0; a < out.A.size(); ++a) {
    std::vector<int> Aidx = hodge_detail::bits(out.A[a]);
    for (int i = 0; i < n; ++i) {
      std::vector<int> t{i};
      t.insert(t.end(), Aidx.begin(), Aidx.end());
      auto [sg, mask] = hodge_detail::sort_tuple(t);
      if (!sg) continue;
      int ai = hodge_detail::index_of(psi.A, mask);
      for (std::size_t b = 0; b < out.B.size(); ++b) {
        CField& dst = out.at(a, b);
        for (int j = 0; j < n; ++j) {
          const CField& src = D[j].at(ai, b);
          for (std::size_t p = 0; p < P; ++p) dst[p] -= static_cast<double>(sg) * h_inv(m, i, j, p) * src[p];
        }
      }
    }
  }
  return out;
}

// Pointwise Gram matrix <e_(A,B), e_(C,D)> = det(H[A,C]) conj(det(H[B,D])), H(i,k) = h^{i kbar}.
inline Eigen::MatrixXcd form_gram(const TransverseMetricField& m, int p, int q, std::size_t pt) {
  const int n = m.n;
  auto A = hodge_detail::masks(n, p), B = hodge_detail::masks(n, q);
  Eigen::MatrixXcd H(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) H(i, k) = h_inv(m, i, k, pt);
  auto minor = [&](unsigned X, unsigned Y) -> cplx {
    auto xi = hodge_detail::bits(X), yi = hodge_detail::bits(Y);
    if (xi.empty()) return 1.0;
    Eigen::MatrixXcd s(xi.size(), yi.size());
    for (std::size_t r = 0; r < xi.size(); ++r)
      for (std::size_t c = 0; c < yi.size(); ++c) s(r, c) = H(xi[r], yi[c]);
    return s.determinant();
  };
  const std::size_t NB = B.size();
  Eigen::MatrixXcd G(A.size() * NB, A.size() * NB);
  for (std::size_t a = 0; a < A.size(); ++a)
    for (std::size_t b = 0; b < NB; ++b)
      for (std::size_t c = 0; c < A.size(); ++c)
        for (std::size_t d = 0; d < NB; ++d)
          G(a * NB + b, c * NB + d) = minor(A[a], A[c]) * std::conj(minor(B[b], B[d]));
  return G;
}

inline Eigen::VectorXcd form_vector(const BasicForm& f, std::size_t pt) {
  Eigen::VectorXcd v(f.c.size());
  for (std::size_t k = 0; k < f.c.size(); ++k) v(k) = f.c[k][pt];
  return v;
}

inline cplx pointwise_inner(const Eigen::MatrixXcd& G, const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
  return (x.transpose() * G * y.conjugate())(0, 0);
}

// Global L^2 pairing with dV = det(g) dx dy (lattice trapezoid weights).
inline cplx l2_inner(const TransverseMetricField& m, const BasicForm& x, const BasicForm& y,
                     const RField* weight_override = nullptr) {
  RField w = weight_override ? *weight_override : lattice_weights(m.grid());
  cplx s = 0;
  for (std::size_t pt = 0; pt < x.points(); ++pt) {
    if (w[pt] == 0.0) continue;
    s += w[pt] * m.det[pt] * pointwise_inner(form_gram(m, x.p, x.q, pt), form_vector(x, pt), form_vector(y, pt));
  }
  return s;
}

// Lefschetz operator L alpha = alpha ^ omega, omega = 1/2 d eta = i h_{i jbar} dz^i ^ dzbar^j.
inline Eigen::MatrixXcd lefschetz_matrix(const TransverseMetricField& m, int p, int q, std::size_t pt) {
  const int n = m.n;
  auto A0 = hodge_detail::masks(n, p), B0 = hodge_detail::masks(n, q);
  auto A1 = hodge_detail::masks(n, p + 1), B1 = hodge_detail::masks(n, q + 1);
  Eigen::MatrixXcd Lm = Eigen::MatrixXcd::Zero(A1.size() * B1.size(), A0.size() * B0.size());
  for (std::size_t a = 0; a < A0.size(); ++a)
    for (std::size_t b = 0; b < B0.size(); ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          int s = hodge_detail::wedge_sign(A0[a], B0[b], 1u << i, 1u << j);
          if (!s) continue;
          int ra = hodge_detail::index_of(A1, A0[a] | (1u << i));
          int rb = hodge_detail::index_of(B1, B0[b] | (1u << j));
          cplx hij = 0.5 * m.g[i * n + j][pt];
          Lm(ra * B1.size() + rb, a * B0.size() + b) += cplx(0, 1) * static_cast<double>(s) * hij;
        }
  return Lm;
}

inline BasicForm lefschetz(const TransverseMetricField& m, const BasicForm& f) {
  if (f.p + 1 > f.n || f.q + 1 > f.n) fail(ErrorKind::DegreeOverflow, "L raises the bidegree past n");
  BasicForm out = zero_form(f.n, f.p + 1, f.q + 1, f.points());
  for (std::size_t pt = 0; pt < f.points(); ++pt) {
    Eigen::VectorXcd v = lefschetz_matrix(m, f.p, f.q, pt) * form_vector(f, pt);
    for (std::size_t k = 0; k < out.c.size(); ++k) out.c[k][pt] = v(k);
  }
  return out;
}

// Pointwise adjoint of L in the form inner product.
inline BasicForm lambda_op(const TransverseMetricField& m, const BasicForm& f) {
  if (f.p < 1 || f.q < 1) fail(ErrorKind::DegreeUnderflow, "Lambda lowers the bidegree below zero");
  BasicForm out = zero_form(f.n, f.p - 1, f.q - 1, f.points());
  for (std::size_t pt = 0; pt < f.points(); ++pt) {
    Eigen::MatrixXcd Lm = lefschetz_matrix(m, f.p - 1, f.q - 1, pt);
    Eigen::MatrixXcd Glo = form_gram(m, f.p - 1, f.q - 1, pt).conjugate();
    Eigen::MatrixXcd Ghi = form_gram(m, f.p, f.q, pt).conjugate();
    Eigen::VectorXcd v = Glo.ldlt().solve(Lm.adjoint() * Ghi * form_vector(f, pt));
    for (std::size_t k = 0; k < out.c.size(); ++k) out.c[k][pt] = v(k);
  }
  return out;
}

inline BasicForm laplacian_delbar(const TransverseMetricField& m, const BasicForm& f) {
  BasicForm out = zero_form(f.n, f.p, f.q, f.points());
  if (f.q >= 1) out = out + delbar_B(m, delbar_star(m, f));
  if (f.q < f.n) out = out + delbar_star(m, delbar_B(m, f));
  return out;
}

inline BasicForm laplacian_del(const TransverseMetricField& m, const BasicForm& f) {
  BasicForm out = zero_form(f.n, f.p, f.q, f.points());
  if (f.p >= 1) out = out + del_B(m, del_star(m, f));
  if (f.p < f.n) out = out + del_star(m, del_B(m, f));
  return out;
}

// Basic Laplacian d d* + d* d on a pure (p,q) form: the (p,q) part plus the two cross parts.
struct BasicLaplacian {
  BasicForm pq;
  std::optional<BasicForm> up;    // (p+1, q-1)
  std::optional<BasicForm> down;  // (p-1, q+1)
};

inline BasicLaplacian laplacian_basic(const TransverseMetricField& m, const BasicForm& f) {
  BasicLaplacian L;
  L.pq = laplacian_del(m, f) + laplacian_delbar(m, f);
  const int n = f.n;
  if (f.p + 1 <= n && f.q >= 1) L.up = del_B(m, delbar_star(m, f)) + delbar_star(m, del_B(m, f));
  if (f.p >= 1 && f.q + 1 <= n) L.down = delbar_B(m, del_star(m, f)) + del_star(m, delbar_B(m, f));
  return L;
}

// Complex Laplacian on functions, h^{i jbar} d_i dbar_j f, assembled with pure second differences.
inline CField laplace_function(const TransverseMetricField& m, const CField& f) {
  const auto& ch = *m.source_chart;
  const int n = m.n;
  CField out(f.size(), cplx(0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      CField d = ddbar(f, ch.grid, i, j, ch.stencil);
      for (std::size_t p = 0; p < f.size(); ++p) out[p] += h_inv(m, i, j, p) * d[p];
    }
  return out;
}

// -h^{i jbar} nabla_i nabla_jbar Phi
inline BasicForm rough_laplacian(const TransverseMetricField& m, const BasicForm& f) {
  const int n = f.n;
  BasicForm out = zero_form(n, f.p, f.q, f.points());
  for (int j = 0; j < n; ++j) {
    BasicForm dj = nabla_bar(m, f, j);
    for (int i = 0; i < n; ++i) {
      BasicForm dij = nabla(m, dj, i);
      for (std::size_t k = 0; k < out.c.size(); ++k)
        for (std::size_t p = 0; p < out.c[k].size(); ++p) out.c[k][p] -= h_inv(m, i, j, p) * dij.c[k][p];
    }
  }
  return out;
}

// Curvature side of the general (p,q) Weitzenboeck formula, with the commutator of second covariant
// derivatives assembled directly.
inline BasicForm weitzenbock_commutator_term(const TransverseMetricField& m, const BasicForm& f) {
  const int n = f.n;
  BasicForm out = zero_form(n, f.p, f.q, f.points());
  if (f.q == 0) return out;
  // C[i][b] = [nabla_i, nabla_bbar] f
  std::vector<std::vector<BasicForm>> C(n);
  for (int i = 0; i < n; ++i) {
    BasicForm di = nabla(m, f, i);
    for (int b = 0; b < n; ++b) C[i].push_back(nabla(m, nabla_bar(m, f, b), i) - nabla_bar(m, di, b));
  }
  for (std::size_t a = 0; a < out.A.size(); ++a) {
    auto Aidx = hodge_detail::bits(out.A[a]);
    for (std::size_t bb = 0; bb < out.B.size(); ++bb) {
      auto Bidx = hodge_detail::bits(out.B[bb]);
      CField& dst = out.at(a, bb);
      for (std::size_t k = 0; k < Bidx.size(); ++k) {
        const double sk = (k & 1) ? -1.0 : 1.0;  // -(-1)^k, k counted from 1
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            std::vector<int> t{j};
            for (std::size_t r = 0; r < Bidx.size(); ++r)
              if (r != k) t.push_back(Bidx[r]);
            for (std::size_t p = 0; p < dst.size(); ++p)
              dst[p] += sk * h_inv(m, i, j, p) * component(C[i][Bidx[k]], Aidx, t, p);
          }
      }
    }
  }
  return out;
}

// Ricci side of the (0,q) Weitzenboeck formula: sum_k Ric_{tau beta_k} h^{tau sigmabar} Phi_{..sigmabar..}
// with Ric_{i jbar} = -d_i dbar_j log det g.
inline BasicForm weitzenbock_ricci_term(const TransverseMetricField& m, const CurvatureField& curv, const BasicForm& f) {
  const int n = f.n;
  BasicForm out = zero_form(n, f.p, f.q, f.points());
  for (std::size_t a = 0; a < out.A.size(); ++a) {
    auto Aidx = hodge_detail::bits(out.A[a]);
    for (std::size_t bb = 0; bb < out.B.size(); ++bb) {
      auto Bidx = hodge_detail::bits(out.B[bb]);
      CField& dst = out.at(a, bb);
      for (std::size_t k = 0; k < Bidx.size(); ++k)
        for (int tau = 0; tau < n; ++tau)
          for (int sigma = 0; sigma < n; ++sigma) {
            std::vector<int> t = Bidx;
            t[k] = sigma;
            for (std::size_t p = 0; p < dst.size(); ++p)
              dst[p] += 0.5 * curv.ricci[tau * n + Bidx[k]][p] * h_inv(m, tau, sigma, p) * component(f, Aidx, t, p);
          }
    }
  }
  return out;
}

struct KahlerResiduals {
  double lambda_del = 0;     // [Lambda, d] - i dbar*
  double lambda_delbar = 0;  // [Lambda, dbar] + i d*
  double basic_vs_delbar = 0;
  double del_vs_delbar = 0;
  double cross = 0;
};

// Residual mask: points at least `margin` nodes from a non-periodic end.
inline std::vector<bool> interior_mask(const Grid& g, int margin) {
  std::vector<bool> m(g.size());
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = g.interior(p, margin);
  return m;
}

inline KahlerResiduals kahler_identities_residual(const TransverseMetricField& m, const BasicForm& f, int margin = 0) {
  const int n = f.n;
  auto mask = interior_mask(m.grid(), margin);
  KahlerResiduals r;
  const cplx I(0, 1);
  // [Lambda, del] f = Lambda del f - del Lambda f, landing in (p, q-1)
  if (f.q >= 1) {
    BasicForm lhs = zero_form(n, f.p, f.q - 1, f.points());
    if (f.p < n) lhs = lhs + lambda_op(m, del_B(m, f));
    if (f.p >= 1) lhs = lhs - del_B(m, lambda_op(m, f));
    r.lambda_del = max_abs(lhs - I * delbar_star(m, f), &mask);
  }
  if (f.p >= 1) {
    BasicForm lhs = zero_form(n, f.p - 1, f.q, f.points());
    if (f.q < n) lhs = lhs + lambda_op(m, delbar_B(m, f));
    if (f.q >= 1) lhs = lhs - delbar_B(m, lambda_op(m, f));
    r.lambda_delbar = max_abs(lhs + I * del_star(m, f), &mask);
  }
  auto L = laplacian_basic(m, f);
  BasicForm dbar = laplacian_delbar(m, f), del = laplacian_del(m, f);
  r.basic_vs_delbar = max_abs(L.pq - 2.0 * dbar, &mask);
  r.del_vs_delbar = max_abs(del - dbar, &mask);
  if (L.up) r.cross = std::max(r.cross, max_abs(*L.up, &mask));
  if (L.down) r.cross = std::max(r.cross, max_abs(*L.down, &mask));
  return r;
}

struct WeitzenbockResiduals {
  double general = 0;  // against the commutator form
  double ricci = 0;    // (0,q) Ricci form; 0 if p > 0
};

inline WeitzenbockResiduals weitzenbock_residual(const TransverseMetricField& m, const CurvatureField& curv,
                                                 const BasicForm& f, int margin = 0) {
  if (f.q < 1) fail(ErrorKind::DegreeUnderflow, "Weitzenboeck check needs q >= 1");
  auto mask = interior_mask(m.grid(), margin);
  BasicForm lhs = laplacian_delbar(m, f);
  BasicForm rough = rough_laplacian(m, f);
  WeitzenbockResiduals r;
  r.general = max_abs(lhs - (rough + weitzenbock_commutator_term(m, f)), &mask);
  if (f.p == 0) r.ricci = max_abs(lhs - (rough + weitzenbock_ricci_term(m, curv, f)), &mask);
  return r;
}

// |I1 + I2| with I1 = int <h^{i jbar} nabla_i nabla_jbar phi, psi>, I2 = int h^{i jbar} <nabla_jbar phi, nabla_ibar psi>.
struct IbpResult {
  cplx I1, I2;
  double residual = 0;
};

inline IbpResult ibp_check(const TransverseMetricField& m, const BasicForm& phi, const BasicForm& psi) {
  const Grid& g = m.grid();
  for (int a = 0; a < g.axes(); ++a)
    if (!g.periodic[a]) fail(ErrorKind::NonPeriodicChart, "integration by parts needs a periodic chart");
  const int n = phi.n;
  BasicForm lap = zero_form(n, phi.p, phi.q, phi.points());
  for (std::size_t k = 0; k < lap.c.size(); ++k) lap.c[k] = CField(phi.points(), cplx(0));
  std::vector<BasicForm> dphi, dpsi;
  for (int j = 0; j < n; ++j) {
    dphi.push_back(nabla_bar(m, phi, j));
    dpsi.push_back(nabla_bar(m, psi, j));
  }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      BasicForm dij = nabla(m, dphi[j], i);
      for (std::size_t k = 0; k < lap.c.size(); ++k)
        for (std::size_t p = 0; p < lap.c[k].size(); ++p) lap.c[k][p] += h_inv(m, i, j, p) * dij.c[k][p];
    }
  IbpResult r;
  r.I1 = l2_inner(m, lap, psi);
  // the extra barred slots pair through h^{i jbar}
  RField w = lattice_weights(g);
  cplx s = 0;
  for (std::size_t pt = 0; pt < phi.points(); ++pt) {
    Eigen::MatrixXcd G = form_gram(m, phi.p, phi.q, pt);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        s += w[pt] * m.det[pt] * h_inv(m, i, j, pt) *
             pointwise_inner(G, form_vector(dphi[j], pt), form_vector(dpsi[i], pt));
  }
  r.I2 = s;
  r.residual = std::abs(r.I1 + r.I2);
  return r;
}

// Integrated Bochner identity for a (0,q) form on a periodic chart:
// (Delta Phi, Phi) = |dbar Phi|^2 + |dbar* Phi|^2 = int h^{i jbar}<nabla_jbar Phi, nabla_ibar Phi> + (Ric Phi, Phi).
struct BochnerIntegrals {
  double laplace_pairing = 0;
  double energy = 0;
  double gradient = 0;
  double ricci = 0;
};

inline BochnerIntegrals bochner_integrals(const TransverseMetricField& m, const CurvatureField& curv, const BasicForm& f) {
  const int n = f.n;
  BochnerIntegrals b;
  b.laplace_pairing = l2_inner(m, laplacian_delbar(m, f), f).real();
  if (f.q < n) b.energy += l2_inner(m, delbar_B(m, f), delbar_B(m, f)).real();
  if (f.q >= 1) b.energy += l2_inner(m, delbar_star(m, f), delbar_star(m, f)).real();
  std::vector<BasicForm> d;
  for (int j = 0; j < n; ++j) d.push_back(nabla_bar(m, f, j));
  RField w = lattice_weights(m.grid());
  cplx s = 0;
  for (std::size_t pt = 0; pt < f.points(); ++pt) {
    Eigen::MatrixXcd G = form_gram(m, f.p, f.q, pt);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        s += w[pt] * m.det[pt] * h_inv(m, i, j, pt) * pointwise_inner(G, form_vector(d[j], pt), form_vector(d[i], pt));
  }
  b.gradient = s.real();
  b.ricci = l2_inner(m, weitzenbock_ricci_term(m, curv, f), f).real();
  return b;
}

// d d^c f against i del dbar f, d^c = (i/2)(dbar - del). Returns the max pointwise residual over
// all three bidegree parts.
inline double ddc_residual(const TransverseMetricField& m, const CField& f, int margin = 0) {
  const int n = m.n;
  const cplx I(0, 1);
  auto mask = interior_mask(m.grid(), margin);
  BasicForm f0 = function_form(n, f);
  BasicForm d10 = del_B(m, f0), d01 = delbar_B(m, f0);
  BasicForm dc10 = (-0.5 * I) * d10, dc01 = (0.5 * I) * d01;
  BasicForm part11 = delbar_B(m, dc10) + del_B(m, dc01);
  double res = 0;
  if (n >= 2) res = std::max(max_abs(del_B(m, dc10), &mask), max_abs(delbar_B(m, dc01), &mask));
  const auto& ch = *m.source_chart;
  BasicForm ref = zero_form(n, 1, 1, f.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) ref.at(i, j) = ddbar(f, ch.grid, i, j, ch.stencil);
  // masks(n,1) lists 1<<i in order, so index i is z_i
  res = std::max(res, max_abs(part11 - I * ref, &mask));
  return res;
}

// Fixed-seed smooth test fields: at most four Fourier modes on the chart box.
inline CField random_smooth_field(const Grid& g, std::uint64_t seed, int modes = 4, int max_k = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kd(-max_k, max_k);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi), amp(-1.0, 1.0);
  struct Mode {
    std::vector<int> k;
    cplx a;
    double phase;
  };
  std::vector<Mode> ms;
  for (int s = 0; s < modes; ++s) {
    Mode md;
    for (int a = 0; a < g.axes(); ++a) md.k.push_back(kd(rng));
    md.a = cplx(amp(rng), amp(rng));
    md.phase = ph(rng);
    ms.push_back(md);
  }
  CField f(g.size());
  std::vector<int> idx;
  for (std::size_t p = 0; p < f.size(); ++p) {
    g.unravel(p, idx);
    cplx s = 0;
    for (const auto& md : ms) {
      double arg = md.phase;
      for (int a = 0; a < g.axes(); ++a) {
        double L = g.periodic[a] ? g.h[a] * g.dims[a] : g.h[a] * (g.dims[a] - 1);
        arg += 2.0 * kPi * md.k[a] * (g.coord(a, idx[a]) - g.lo[a]) / L;
      }
      s += md.a * std::exp(cplx(0, arg));
    }
    f[p] = s;
  }
  return f;
}

inline BasicForm random_form(const Grid& g, int n, int p, int q, std::uint64_t seed) {
  BasicForm f = zero_form(n, p, q, g.size());
  for (std::size_t k = 0; k < f.c.size(); ++k) f.c[k] = random_smooth_field(g, seed * 7919 + k);
  return f;
}

}  // namespace sasaki
