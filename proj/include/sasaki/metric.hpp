#pragma once

#include "sasaki/chart.hpp"

namespace sasaki {

// Components stored as one field per index tuple.
//   g[i*n+j]            = g_{i jbar}
//   g_inv[i*n+j]        = g^{i jbar}, with sum_j g^{i jbar} g_{k jbar} = delta_ik
//   dg[(k*n+i)*n+j]     = d_k g_{i jbar}
//   christoffel[(k*n+i)*n+j] = Gamma^k_{ij}
struct TransverseMetricField {
  std::shared_ptr<const LocalChart> source_chart;
  int n = 1;
  std::vector<CField> g;
  std::vector<CField> g_inv;
  std::vector<CField> dg;
  std::vector<CField> christoffel;
  RField det;

  const Grid& grid() const { return source_chart->grid; }
  std::size_t size() const { return det.size(); }

  Eigen::MatrixXcd g_at(std::size_t p) const { return detail::gather(g, n, p); }
  Eigen::MatrixXcd ginv_at(std::size_t p) const { return detail::gather(g_inv, n, p); }
  cplx gamma(int k, int i, int j, std::size_t p) const { return christoffel[(k * n + i) * n + j][p]; }
};

inline TransverseMetricField metric_from_chart(const LocalChart& chart) {
  TransverseMetricField m;
  m.source_chart = std::make_shared<const LocalChart>(chart);
  const Grid& gr = chart.grid;
  const int n = gr.n;
  const std::size_t P = gr.size();
  m.n = n;
  m.g = detail::potential_hessian(chart);
  m.g_inv.assign(n * n, CField(P));
  m.det.assign(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    Eigen::MatrixXcd M = hermitian_part(detail::gather(m.g, n, p));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m.g[i * n + j][p] = M(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues()(0), hi = es.eigenvalues()(n - 1);
    if (!(lo > 0.0) || hi / lo > 1e12) {
      std::ostringstream os;
      os << "condition number " << (lo > 0 ? hi / lo : std::numeric_limits<double>::infinity()) << " at point " << p;
      fail(ErrorKind::SingularMetric, os.str());
    }
    Eigen::MatrixXcd Minv = M.inverse();
    // g^{i jbar} = (M^{-1})_{j i}
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m.g_inv[i * n + j][p] = Minv(j, i);
    m.det[p] = M.determinant().real();
  }
  m.dg.assign(n * n * n, CField());
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m.dg[(k * n + i) * n + j] = dz(m.g[i * n + j], gr, k, chart.stencil);
  // Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}; computed for i <= j and mirrored
  m.christoffel.assign(n * n * n, CField(P));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        CField& out = m.christoffel[(k * n + i) * n + j];
        for (std::size_t p = 0; p < P; ++p) {
          cplx s = 0;
          for (int l = 0; l < n; ++l) s += m.g_inv[k * n + l][p] * m.dg[(i * n + j) * n + l][p];
          out[p] = s;
        }
        if (j != i) m.christoffel[(k * n + j) * n + i] = out;
      }
  return m;
}

// riem[((i*n+j)*n+k)*n+l] = R_{i jbar k lbar} in the chart normalization
//   R_{i jbar k lbar} = 2(-d_k dbar_l g_{i jbar} + g^{p qbar} d_k g_{i qbar} dbar_l g_{p jbar}).
// ricci[i*n+j] = g^{k lbar} R_{i jbar k lbar}; scalar = 2 g^{i jbar} ricci_{i jbar} (real trace).
// ricci_form[i*n+j] = -d_i dbar_j log det g (coefficient of sqrt(-1) dz_i ^ dzbar_j).
struct CurvatureField {
  int n = 1;
  std::vector<CField> riem;
  std::vector<CField> ricci;
  RField scalar;
  std::vector<CField> ricci_form;

  std::size_t idx(int i, int j, int k, int l) const { return ((i * n + j) * n + k) * n + l; }
  cplx R(int i, int j, int k, int l, std::size_t p) const { return riem[idx(i, j, k, l)][p]; }
};

inline CurvatureField curvature(const TransverseMetricField& m) {
  const LocalChart& chart = *m.source_chart;
  const Grid& gr = chart.grid;
  const int n = m.n;
  const std::size_t P = m.size();
  CurvatureField c;
  c.n = n;
  c.riem.assign(n * n * n * n, CField(P));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          CField second = ddbar(m.g[i * n + j], gr, k, l, chart.stencil);
          CField& out = c.riem[c.idx(i, j, k, l)];
          for (std::size_t p = 0; p < P; ++p) {
            cplx quad = 0;
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b)
                quad += m.g_inv[a * n + b][p] * m.dg[(k * n + i) * n + b][p] *
                        std::conj(m.dg[(l * n + j) * n + a][p]);
            out[p] = 2.0 * (-second[p] + quad);
          }
        }
  // Differences along distinct axes break the Kaehler symmetries at O(h^2); project them back.
  {
    std::vector<CField> raw = c.riem;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            const auto& a = raw[c.idx(i, j, k, l)];
            const auto& b = raw[c.idx(k, j, i, l)];
            const auto& e = raw[c.idx(i, l, k, j)];
            const auto& f = raw[c.idx(k, l, i, j)];
            const auto& ah = raw[c.idx(j, i, l, k)];
            const auto& bh = raw[c.idx(j, k, l, i)];
            const auto& eh = raw[c.idx(l, i, j, k)];
            const auto& fh = raw[c.idx(l, k, j, i)];
            CField& out = c.riem[c.idx(i, j, k, l)];
            for (std::size_t p = 0; p < P; ++p)
              out[p] = 0.125 * (a[p] + b[p] + e[p] + f[p] +
                                std::conj(ah[p] + bh[p] + eh[p] + fh[p]));
          }
  }
  c.ricci.assign(n * n, CField(P));
  c.scalar.assign(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    cplx tr = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        cplx s = 0;
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) s += m.g_inv[k * n + l][p] * c.riem[c.idx(i, j, k, l)][p];
        c.ricci[i * n + j][p] = s;
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) tr += m.g_inv[i * n + j][p] * c.ricci[i * n + j][p];
    c.scalar[p] = 2.0 * tr.real();
  }
  RField logdet(P);
  for (std::size_t p = 0; p < P; ++p) logdet[p] = std::log(m.det[p]);
  c.ricci_form.assign(n * n, CField());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto f = ddbar(logdet, gr, i, j, chart.stencil);
      for (auto& v : f) v = -v;
      c.ricci_form[i * n + j] = std::move(f);
    }
  return c;
}

// Closed-form Fubini-Study data for the transverse structure of the unit round S^{2n+1}.
// G = 1/2 log(1+|z|^2); g_{i jbar} = (1+|z|^2)^{-1} delta_ij - (1+|z|^2)^{-2} zbar_i z_j.
inline Eigen::MatrixXcd fubini_study_metric(const std::vector<cplx>& z) {
  const int n = static_cast<int>(z.size());
  double r2 = 0;
  for (auto v : z) r2 += std::norm(v);
  Eigen::MatrixXcd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g(i, j) = (i == j ? 1.0 : 0.0) / (1.0 + r2) - std::conj(z[i]) * z[j] / ((1.0 + r2) * (1.0 + r2));
  return g;
}

// Constant holomorphic sectional curvature tensor c (g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar}).
inline std::vector<cplx> space_form_tensor(const Eigen::MatrixXcd& g, double c) {
  const int n = static_cast<int>(g.rows());
  std::vector<cplx> r(n * n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) r[((i * n + j) * n + k) * n + l] = c * (g(i, j) * g(k, l) + g(i, l) * g(k, j));
  return r;
}

// Pointwise curvature sample: metric matrix plus R_{i jbar k lbar}.
struct CurvatureSample {
  Eigen::MatrixXcd g;
  std::vector<cplx> riem;
  int n() const { return static_cast<int>(g.rows()); }
  cplx R(int i, int j, int k, int l) const {
    const int m = n();
    return riem[((i * m + j) * m + k) * m + l];
  }
};

inline CurvatureSample sample_at(const TransverseMetricField& m, const CurvatureField& c, std::size_t p) {
  CurvatureSample s;
  s.g = m.g_at(p);
  s.riem.resize(c.riem.size());
  for (std::size_t a = 0; a < c.riem.size(); ++a) s.riem[a] = c.riem[a][p];
  return s;
}

// Exact sample of the unit round S^{2n+1} transverse structure at z = 0.
inline CurvatureSample round_sphere_sample(int n) {
  CurvatureSample s;
  s.g = Eigen::MatrixXcd::Identity(n, n);
  s.riem = space_form_tensor(s.g, 2.0);
  return s;
}

inline CurvatureSample flat_sample(int n) {
  CurvatureSample s;
  s.g = Eigen::MatrixXcd::Identity(n, n);
  s.riem.assign(n * n * n * n, cplx(0));
  return s;
}

}  // namespace sasaki
