#pragma once

#include "sasaki/metric.hpp"

namespace sasaki {

// Cube [-L, L]^{2n} with N points per axis.
inline Grid cube_grid(int n, int N, double L, BoundaryKind kind) {
  return make_grid(n, std::vector<int>(2 * n, N), std::vector<double>(2 * n, -L), std::vector<double>(2 * n, L), kind);
}

// Transverse potential of the unit round S^{2n+1}: G = 1/2 log(1 + |z|^2).
inline double fubini_study_potential(const std::vector<cplx>& z) {
  double r2 = 0;
  for (auto v : z) r2 += std::norm(v);
  return 0.5 * std::log1p(r2);
}

inline LocalChart fubini_study_chart(int n, int N, double L = 1.0, Stencil st = Stencil::central2) {
  BoundarySpec b;
  b.kind = BoundaryKind::open;
  LocalChart c = chart_from_function(fubini_study_potential, cube_grid(n, N, L, BoundaryKind::open), b, st);
  c.fiber_length = 2.0 * kPi;
  return c;
}

inline LocalChart flat_chart(int n, int N, double period = 2.0 * kPi, Stencil st = Stencil::central2) {
  BoundarySpec b;
  b.kind = BoundaryKind::periodic;
  b.reference = 0.5 * Eigen::MatrixXcd::Identity(n, n);
  Grid g = make_grid(n, std::vector<int>(2 * n, N), std::vector<double>(2 * n, 0.0),
                     std::vector<double>(2 * n, period), BoundaryKind::periodic);
  return chart_from_function([&](const std::vector<cplx>& z) { return reference_quadratic(b.reference, z); }, g, b,
                             st);
}

// Periodic chart with G = 1/2|z|^2 + eps * (trigonometric perturbation), period 2pi on every axis.
inline LocalChart torus_chart(int n, int N, double eps, Stencil st = Stencil::central2) {
  BoundarySpec b;
  b.kind = BoundaryKind::periodic;
  b.reference = 0.5 * Eigen::MatrixXcd::Identity(n, n);
  Grid g = make_grid(n, std::vector<int>(2 * n, N), std::vector<double>(2 * n, 0.0),
                     std::vector<double>(2 * n, 2.0 * kPi), BoundaryKind::periodic);
  auto pot = [&](const std::vector<cplx>& z) {
    double s = reference_quadratic(b.reference, z);
    for (int i = 0; i < n; ++i) {
      s += eps * std::cos(z[i].real()) * std::sin(z[i].imag() + 0.3 * i);
      if (i + 1 < n) s += 0.5 * eps * std::cos(z[i].real() - z[i + 1].imag());
    }
    return s;
  };
  return chart_from_function(pot, g, b, st);
}

// Leaf volume times fiber length.
inline double chart_volume(const TransverseMetricField& m) {
  RField w = lattice_weights(m.grid());
  double s = 0;
  for (std::size_t p = 0; p < w.size(); ++p) s += w[p] * m.det[p];
  return m.source_chart->fiber_length * s;
}

}  // namespace sasaki
