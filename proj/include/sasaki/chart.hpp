#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <sstream>

#include "sasaki/grid.hpp"

namespace sasaki {

struct ConeData {
  double beta_minus = 1.0;  // cone angle / 2pi at s -> -inf
  double beta_plus = 1.0;   // cone angle / 2pi at s -> +inf
};

struct BoundarySpec {
  BoundaryKind kind = BoundaryKind::periodic;
  ConeData cone;
  // Periodic charts: G - Re(z^T A conj z) is periodic. A is Hermitian, n x n.
  Eigen::MatrixXcd reference;
};

// Transverse potential on a grid plus the Reeb bookkeeping.
// Reeb marker: xi = d/dx, eta = dx - i(G_j dz_j - G_jbar dzbar_j), scaled by eta_scale.
struct LocalChart {
  Grid grid;
  BoundarySpec boundary;
  Stencil stencil = Stencil::central2;
  RField G;
  double eta_scale = 1.0;
  double fiber_length = 1.0;

  int n() const { return grid.n; }
};

inline double reference_quadratic(const Eigen::MatrixXcd& A, const std::vector<cplx>& z) {
  cplx s = 0;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) s += A(i, j) * z[i] * std::conj(z[j]);
  return s.real();
}

namespace detail {

// Ghost layer for the pole-compactified s-axis: f ~ a + b s + c r^k near the end.
inline double decay_extrapolate(double f0, double f1, double f2, double r) {
  return (2.0 + r) * f2 - (1.0 + 2.0 * r) * f1 + r * f0;
}

// 2 d_i dbar_j G for every (i,j), honoring the chart's boundary treatment.
inline std::vector<CField> potential_hessian(const LocalChart& c) {
  const Grid& g = c.grid;
  const int n = g.n;
  std::vector<CField> out(n * n);
  if (c.boundary.kind == BoundaryKind::periodic) {
    RField per(c.G.size());
    for (std::size_t p = 0; p < per.size(); ++p)
      per[p] = c.G[p] - reference_quadratic(c.boundary.reference, g.z_at(p));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        auto h = ddbar(per, g, i, j, c.stencil);
        for (auto& v : h) v = 2.0 * v + 2.0 * c.boundary.reference(i, j);
        out[i * n + j] = std::move(h);
      }
    return out;
  }
  if (c.boundary.kind == BoundaryKind::pole_compactified) {
    // extend along s by one ghost layer each side, difference, strip
    Grid ge = g;
    ge.dims[0] += 2;
    ge.lo[0] -= g.h[0];
    const int ms = g.dims[0], mt = g.dims[1];
    RField ext(static_cast<std::size_t>(ms + 2) * mt);
    const double rm = std::exp(-2.0 * c.boundary.cone.beta_minus * g.h[0]);
    const double rp = std::exp(-2.0 * c.boundary.cone.beta_plus * g.h[0]);
    for (int j = 0; j < mt; ++j) {
      for (int i = 0; i < ms; ++i) ext[(i + 1) * mt + j] = c.G[i * mt + j];
      ext[j] = decay_extrapolate(c.G[2 * mt + j], c.G[mt + j], c.G[j], rm);
      ext[(ms + 1) * mt + j] =
          decay_extrapolate(c.G[(ms - 3) * mt + j], c.G[(ms - 2) * mt + j], c.G[(ms - 1) * mt + j], rp);
    }
    auto h = ddbar(ext, ge, 0, 0, c.stencil);
    CField core(g.size());
    for (int i = 0; i < ms; ++i)
      for (int j = 0; j < mt; ++j) core[i * mt + j] = 2.0 * h[(i + 1) * mt + j];
    out[0] = std::move(core);
    return out;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto h = ddbar(c.G, g, i, j, c.stencil);
      for (auto& v : h) v *= 2.0;
      out[i * n + j] = std::move(h);
    }
  return out;
}

inline Eigen::MatrixXcd gather(const std::vector<CField>& comp, int n, std::size_t p) {
  Eigen::MatrixXcd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = comp[i * n + j][p];
  return m;
}

}  // namespace detail

// Hermitian-symmetrized matrix of metric components at a point.
inline Eigen::MatrixXcd hermitian_part(const Eigen::MatrixXcd& m) { return 0.5 * (m + m.adjoint()); }

inline LocalChart build_chart(RField potential, const Grid& grid, const BoundarySpec& boundary,
                              Stencil stencil = Stencil::central2) {
  if (grid.n < 1 || grid.axes() != 2 * grid.n) fail(ErrorKind::GridTooCoarse, "axis count must be 2n");
  for (int d : grid.dims)
    if (d < 8) fail(ErrorKind::GridTooCoarse, "at least 8 points per axis required");
  if (potential.size() != grid.size()) fail(ErrorKind::GridTooCoarse, "potential sample count does not match grid");
  if (boundary.kind == BoundaryKind::pole_compactified && grid.n != 1)
    fail(ErrorKind::GridTooCoarse, "pole-compactified charts are one complex dimensional");
  for (double v : potential)
    if (!std::isfinite(v)) fail(ErrorKind::NonPositiveMetric, "potential is not finite");
  LocalChart c;
  c.grid = grid;
  c.boundary = boundary;
  if (boundary.kind == BoundaryKind::periodic && boundary.reference.size() == 0)
    c.boundary.reference = Eigen::MatrixXcd::Zero(grid.n, grid.n);
  c.stencil = stencil;
  c.G = std::move(potential);

  auto hess = detail::potential_hessian(c);
  double worst = std::numeric_limits<double>::infinity();
  std::size_t worst_p = 0;
  const int margin = boundary.kind == BoundaryKind::open ? 1 : 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (!grid.interior(p, margin)) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_part(detail::gather(hess, grid.n, p)),
                                                       Eigen::EigenvaluesOnly);
    double lam = es.eigenvalues()(0);
    if (lam < worst) {
      worst = lam;
      worst_p = p;
    }
  }
  if (!(worst > 0.0)) {
    std::vector<int> idx;
    grid.unravel(worst_p, idx);
    std::ostringstream os;
    os << "2 G_{i jbar} not positive definite; smallest eigenvalue " << worst << " at grid index (";
    for (std::size_t a = 0; a < idx.size(); ++a) os << (a ? "," : "") << idx[a];
    os << ")";
    fail(ErrorKind::NonPositiveMetric, os.str());
  }
  return c;
}

inline LocalChart chart_from_function(const std::function<double(const std::vector<cplx>&)>& G, const Grid& grid,
                                      const BoundarySpec& b, Stencil st = Stencil::central2) {
  RField s(grid.size());
  for (std::size_t p = 0; p < s.size(); ++p) s[p] = G(grid.z_at(p));
  return build_chart(std::move(s), grid, b, st);
}

// D-homothetic deformation: eta -> a eta, xi -> xi/a, g^T -> a g^T.
inline LocalChart d_homothetic(const LocalChart& c, double a) {
  if (!(a > 0.0)) fail(ErrorKind::NonPositiveParameter, "D-homothety parameter must be positive");
  LocalChart out = c;
  for (auto& v : out.G) v *= a;
  if (out.boundary.kind == BoundaryKind::periodic) out.boundary.reference *= a;
  out.eta_scale *= a;
  out.fiber_length *= a;
  return out;
}

}  // namespace sasaki
