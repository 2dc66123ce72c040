#pragma once

#include "sasaki/metric.hpp"

namespace sasaki {

// Adapted real frame (xi, E_a1, E_b1, ..., E_an, E_bn); E_ai, E_bi are the horizontal lifts of
// d/dRe z_i and d/dIm z_i. Vectors are length 2n+1 with index 0 the Reeb component.
struct SasakianMetricSample {
  Eigen::MatrixXd full_metric;
  Eigen::VectorXd eta_component;
  Eigen::MatrixXd phi_tensor;
};

namespace detail {

inline CField to_complex_d(const Eigen::VectorXd& v, int n) {
  CField u(n);
  for (int i = 0; i < n; ++i) u[i] = cplx(v(1 + 2 * i), v(2 + 2 * i));
  return u;
}

inline double herm_real(const Eigen::MatrixXcd& g, const CField& u, const CField& v) {
  cplx s = 0;
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) s += u[i] * g(i, j) * std::conj(v[j]);
  return s.real();
}

}  // namespace detail

inline SasakianMetricSample sasakian_sample(const Eigen::MatrixXcd& gT) {
  const int n = static_cast<int>(gT.rows());
  const int d = 2 * n + 1;
  SasakianMetricSample s;
  s.full_metric = Eigen::MatrixXd::Zero(d, d);
  s.full_metric(0, 0) = 1.0;
  for (int a = 0; a < 2 * n; ++a)
    for (int b = 0; b < 2 * n; ++b) {
      Eigen::VectorXd ea = Eigen::VectorXd::Zero(d), eb = Eigen::VectorXd::Zero(d);
      ea(1 + a) = 1.0;
      eb(1 + b) = 1.0;
      s.full_metric(1 + a, 1 + b) =
          detail::herm_real(gT, detail::to_complex_d(ea, n), detail::to_complex_d(eb, n));
    }
  s.eta_component = Eigen::VectorXd::Zero(d);
  s.eta_component(0) = 1.0;
  s.phi_tensor = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    s.phi_tensor(1 + 2 * i + 1, 1 + 2 * i) = 1.0;   // Phi E_a = E_b
    s.phi_tensor(1 + 2 * i, 1 + 2 * i + 1) = -1.0;  // Phi E_b = -E_a
  }
  return s;
}

// Ambient Riemannian 4-tensor at a sample with R(X,Y,Y,X) the sectional numerator and
// g(R(X,Y)Z, W) = R(X,Y,Z,W).
class AmbientCurvature {
 public:
  explicit AmbientCurvature(CurvatureSample s) : s_(std::move(s)), n_(s_.n()), m_(sasakian_sample(s_.g)) {}

  int dim() const { return 2 * n_ + 1; }
  const SasakianMetricSample& metric() const { return m_; }

  double g(const Eigen::VectorXd& X, const Eigen::VectorXd& Y) const { return X.dot(m_.full_metric * Y); }
  Eigen::VectorXd phi(const Eigen::VectorXd& X) const { return m_.phi_tensor * X; }
  Eigen::VectorXd horizontal(const Eigen::VectorXd& X) const {
    Eigen::VectorXd h = X;
    h(0) = 0.0;
    return h;
  }

  // Transverse 4-tensor from the complex components.
  double transverse(const Eigen::VectorXd& X, const Eigen::VectorXd& Y, const Eigen::VectorXd& Z,
                    const Eigen::VectorXd& W) const {
    const int n = n_;
    CField x = detail::to_complex_d(X, n), y = detail::to_complex_d(Y, n), z = detail::to_complex_d(Z, n),
           w = detail::to_complex_d(W, n);
    cplx s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        cplx a = x[i] * std::conj(y[j]) - y[i] * std::conj(x[j]);
        if (a == cplx(0)) continue;
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            cplx b = z[k] * std::conj(w[l]) - w[k] * std::conj(z[l]);
            s += s_.R(i, j, k, l) * a * b;
          }
      }
    return 0.25 * s.real();
  }

  double constant_one(const Eigen::VectorXd& X, const Eigen::VectorXd& Y, const Eigen::VectorXd& Z,
                      const Eigen::VectorXd& W) const {
    return g(Y, Z) * g(X, W) - g(X, Z) * g(Y, W);
  }

  // Submersion correction on D.
  double phi_correction(const Eigen::VectorXd& X, const Eigen::VectorXd& Y, const Eigen::VectorXd& Z,
                        const Eigen::VectorXd& W) const {
    return -g(phi(Y), Z) * g(phi(X), W) + g(phi(X), Z) * g(phi(Y), W) + 2.0 * g(phi(X), Y) * g(phi(Z), W);
  }

  // Full tensor on arbitrary vectors: horizontal part from the transverse data, Reeb blocks from
  // R(X,xi)Y = g(xi,Y)X - g(X,Y)xi.
  double full(const Eigen::VectorXd& X, const Eigen::VectorXd& Y, const Eigen::VectorXd& Z,
              const Eigen::VectorXd& W) const {
    Eigen::VectorXd hx = horizontal(X), hy = horizontal(Y), hz = horizontal(Z), hw = horizontal(W);
    return transverse(hx, hy, hz, hw) + phi_correction(hx, hy, hz, hw) + constant_one(X, Y, Z, W) -
           constant_one(hx, hy, hz, hw);
  }

  Eigen::VectorXd curvature_operator(const Eigen::VectorXd& X, const Eigen::VectorXd& Y,
                                     const Eigen::VectorXd& Z) const {
    const int d = dim();
    Eigen::VectorXd low(d);
    for (int a = 0; a < d; ++a) low(a) = full(X, Y, Z, Eigen::VectorXd::Unit(d, a));
    return m_.full_metric.ldlt().solve(low);
  }

  Eigen::MatrixXd ricci() const {
    const int d = dim();
    Eigen::MatrixXd ginv = m_.full_metric.inverse();
    Eigen::MatrixXd ric = Eigen::MatrixXd::Zero(d, d);
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c) {
        double s = 0;
        for (int a = 0; a < d; ++a)
          for (int e = 0; e < d; ++e) {
            if (ginv(a, e) == 0.0) continue;
            s += ginv(a, e) * full(Eigen::VectorXd::Unit(d, a), Eigen::VectorXd::Unit(d, b),
                                   Eigen::VectorXd::Unit(d, c), Eigen::VectorXd::Unit(d, e));
          }
        ric(b, c) = s;
      }
    return ric;
  }

  double scalar() const { return (m_.full_metric.inverse() * ricci()).trace(); }

  // Transverse Ricci as a real form on D, from the complex Ricci components.
  Eigen::MatrixXd transverse_ricci_real() const {
    const int d = dim();
    const int n = n_;
    Eigen::MatrixXcd ric = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd gi = s_.g.inverse();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) ric(i, j) += gi(l, k) * s_.R(i, j, k, l);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
    for (int a = 1; a < d; ++a)
      for (int b = 1; b < d; ++b)
        out(a, b) = detail::herm_real(ric, detail::to_complex_d(Eigen::VectorXd::Unit(d, a), n),
                                      detail::to_complex_d(Eigen::VectorXd::Unit(d, b), n));
    return out;
  }

  double transverse_scalar() const {
    const int n = n_;
    Eigen::MatrixXcd gi = s_.g.inverse();
    cplx s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) s += gi(j, i) * gi(l, k) * s_.R(i, j, k, l);
    return 2.0 * s.real();
  }

 private:
  CurvatureSample s_;
  int n_;
  SasakianMetricSample m_;
};

inline void require_in_D(const Eigen::VectorXd& v) {
  if (std::abs(v(0)) > 1e-10) fail(ErrorKind::VectorNotInD, "Reeb component " + std::to_string(v(0)));
}

inline double full_curvature_from_transverse(const CurvatureSample& s, const Eigen::VectorXd& X,
                                             const Eigen::VectorXd& Y, const Eigen::VectorXd& Z,
                                             const Eigen::VectorXd& W) {
  require_in_D(X);
  require_in_D(Y);
  require_in_D(Z);
  require_in_D(W);
  AmbientCurvature a(s);
  return a.transverse(X, Y, Z, W) + a.phi_correction(X, Y, Z, W);
}

// || R(X,xi)Y - (g(xi,Y)X - g(X,Y)xi) || in the full metric.
inline double reeb_curvature_check(const CurvatureSample& s, const Eigen::VectorXd& X, const Eigen::VectorXd& Y) {
  AmbientCurvature a(s);
  const int d = a.dim();
  Eigen::VectorXd xi = Eigen::VectorXd::Unit(d, 0);
  Eigen::VectorXd lhs = a.curvature_operator(X, xi, Y);
  Eigen::VectorXd rhs = a.g(xi, Y) * X - a.g(X, Y) * xi;
  Eigen::VectorXd diff = lhs - rhs;
  return std::sqrt(std::max(0.0, a.g(diff, diff)));
}

struct CurvatureRelations {
  double ricci_residual = 0;
  double scalar_residual = 0;
  double ambient_scalar = 0;
  double transverse_scalar = 0;
};

inline CurvatureRelations curvature_relations_check(const CurvatureSample& s) {
  AmbientCurvature a(s);
  const int n = s.n();
  const int d = a.dim();
  CurvatureRelations r;
  Eigen::MatrixXd ric = a.ricci();
  Eigen::MatrixXd ricT = a.transverse_ricci_real();
  const Eigen::MatrixXd& G = a.metric().full_metric;
  for (int i = 1; i < d; ++i)
    for (int j = 1; j < d; ++j)
      r.ricci_residual = std::max(r.ricci_residual, std::abs(ricT(i, j) - (ric(i, j) + 2.0 * G(i, j))));
  r.ambient_scalar = a.scalar();
  r.transverse_scalar = a.transverse_scalar();
  r.scalar_residual = std::abs(r.transverse_scalar - (r.ambient_scalar + 2.0 * n));
  return r;
}

// Field version: worst residuals over all grid points.
inline CurvatureRelations curvature_relations_check(const TransverseMetricField& m, const CurvatureField& c) {
  CurvatureRelations worst;
  for (std::size_t p = 0; p < m.size(); ++p) {
    CurvatureRelations r = curvature_relations_check(sample_at(m, c, p));
    worst.ricci_residual = std::max(worst.ricci_residual, r.ricci_residual);
    worst.scalar_residual = std::max(worst.scalar_residual, r.scalar_residual);
  }
  return worst;
}

}  // namespace sasaki
