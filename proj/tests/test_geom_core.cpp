#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sasaki/ambient.hpp"
#include "sasaki/chart_io.hpp"
#include "sasaki/models.hpp"

using namespace sasaki;

namespace {

// Closed forms for G = 1/2 log(1+|z|^2).
double fs_g11(cplx z) { return 1.0 / std::pow(1.0 + std::norm(z), 2); }
cplx fs_gamma(cplx z) { return -2.0 * std::conj(z) / (1.0 + std::norm(z)); }

std::size_t center_index(const Grid& g) {
  std::size_t p = 0;
  for (int a = 0; a < g.axes(); ++a) p += static_cast<std::size_t>(g.dims[a] / 2) * g.stride(a);
  return p;
}

struct FsErrors {
  double g = 0, gamma = 0, scalar = 0;
};

// Max errors over the inner half of the cube, so every sample sees centered stencils.
FsErrors fs_errors(int N) {
  LocalChart c = fubini_study_chart(1, N + 1, 1.0);
  auto m = metric_from_chart(c);
  auto k = curvature(m);
  FsErrors e;
  for (std::size_t p = 0; p < m.size(); ++p) {
    cplx z = c.grid.z_at(p)[0];
    if (std::abs(z.real()) > 0.5 || std::abs(z.imag()) > 0.5) continue;
    e.g = std::max(e.g, std::abs(m.g[0][p] - fs_g11(z)));
    e.gamma = std::max(e.gamma, std::abs(m.christoffel[0][p] - fs_gamma(z)));
    e.scalar = std::max(e.scalar, std::abs(k.scalar[p] - 8.0));
  }
  return e;
}

Eigen::VectorXd random_D(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * n + 1);
  for (int a = 1; a <= 2 * n; ++a) v(a) = nd(rng);
  return v;
}

}  // namespace

TEST(BuildChart, FlatQuadraticGivesUnitMetric) {
  auto c = flat_chart(1, 16);
  auto m = metric_from_chart(c);
  for (std::size_t p = 0; p < m.size(); ++p) {
    EXPECT_NEAR(m.g[0][p].real(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(m.christoffel[0][p]), 0.0, 1e-12);
  }
}

TEST(BuildChart, FubiniStudyAccepted) {
  EXPECT_NO_THROW(fubini_study_chart(1, 33));
  EXPECT_NO_THROW(fubini_study_chart(2, 9));
}

TEST(BuildChart, NegativePotentialRejected) {
  BoundarySpec b;
  b.kind = BoundaryKind::open;
  Grid g = cube_grid(1, 16, 1.0, BoundaryKind::open);
  try {
    chart_from_function([](const std::vector<cplx>& z) { return -0.5 * std::norm(z[0]); }, g, b);
    FAIL() << "expected NonPositiveMetric";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveMetric);
    EXPECT_NE(std::string(e.what()).find("smallest eigenvalue"), std::string::npos);
  }
}

TEST(BuildChart, CoarseGridRejected) {
  BoundarySpec b;
  b.kind = BoundaryKind::open;
  Grid g = cube_grid(1, 6, 1.0, BoundaryKind::open);
  try {
    chart_from_function(fubini_study_potential, g, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridTooCoarse);
  }
}

TEST(Metric, FubiniStudyAtOrigin) {
  auto c = fubini_study_chart(1, 65);
  auto m = metric_from_chart(c);
  std::size_t p0 = center_index(c.grid);
  ASSERT_NEAR(std::abs(c.grid.z_at(p0)[0]), 0.0, 1e-14);
  EXPECT_NEAR(m.g[0][p0].real(), 1.0, 2e-3);
  EXPECT_NEAR(std::abs(m.christoffel[0][p0]), 0.0, 1e-12);
}

TEST(Metric, InverseAndSymmetry) {
  auto c = fubini_study_chart(2, 9, 0.8);
  auto m = metric_from_chart(c);
  for (std::size_t p = 0; p < m.size(); ++p) {
    Eigen::MatrixXcd G = m.g_at(p);
    Eigen::MatrixXcd Gi = m.ginv_at(p);
    // sum_j g^{i jbar} g_{k jbar} = delta_ik
    Eigen::MatrixXcd prod = Gi * G.transpose();
    EXPECT_LT((prod - Eigen::MatrixXcd::Identity(2, 2)).norm(), 1e-12);
    EXPECT_LT((G - G.adjoint()).norm(), 1e-15);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_EQ(m.gamma(k, i, j, p), m.gamma(k, j, i, p));
  }
}

TEST(Metric, SecondOrderConvergence) {
  FsErrors c = fs_errors(32), f = fs_errors(64);
  EXPECT_NEAR(c.g / f.g, 4.0, 0.8);
  EXPECT_NEAR(c.gamma / f.gamma, 4.0, 0.8);
  EXPECT_NEAR(c.scalar / f.scalar, 4.0, 0.8);
}

TEST(Curvature, FlatVanishes) {
  auto m = metric_from_chart(flat_chart(2, 8));
  auto k = curvature(m);
  for (const auto& comp : k.riem)
    for (auto v : comp) EXPECT_LT(std::abs(v), 1e-12);
  for (double s : k.scalar) EXPECT_LT(std::abs(s), 1e-12);
}

TEST(Curvature, FubiniStudyScalarEight) {
  auto c = fubini_study_chart(1, 129, 1.0);
  auto k = curvature(metric_from_chart(c));
  for (std::size_t p = 0; p < c.G.size(); ++p) {
    if (!c.grid.interior(p, 4)) continue;
    EXPECT_NEAR(k.scalar[p], 8.0, 1e-2);
  }
}

TEST(Curvature, KaehlerSymmetriesAndContractions) {
  auto c = fubini_study_chart(2, 9, 0.8);
  auto m = metric_from_chart(c);
  auto k = curvature(m);
  const int n = 2;
  for (std::size_t p = 0; p < m.size(); ++p) {
    double mag = 0;
    for (const auto& comp : k.riem) mag = std::max(mag, std::abs(comp[p]));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            cplx r = k.R(i, j, a, b, p);
            EXPECT_LE(std::abs(r - k.R(a, j, i, b, p)), 1e-12 * mag);
            EXPECT_LE(std::abs(r - k.R(i, b, a, j, p)), 1e-12 * mag);
            EXPECT_LE(std::abs(r - std::conj(k.R(j, i, b, a, p))), 1e-12 * mag);
          }
    Eigen::MatrixXcd gi = m.ginv_at(p);
    cplx tr = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        cplx s = 0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) s += gi(a, b) * k.R(i, j, a, b, p);
        EXPECT_LE(std::abs(s - k.ricci[i * n + j][p]), 1e-12 * (1.0 + std::abs(s)));
        tr += gi(i, j) * k.ricci[i * n + j][p];
      }
    EXPECT_LE(std::abs(2.0 * tr.real() - k.scalar[p]), 1e-12 * (1.0 + std::abs(k.scalar[p])));
  }
}

TEST(Curvature, TwoDimensionalConstantHolomorphic) {
  // fit c in R = c (g g + g g) at interior points
  auto c = fubini_study_chart(2, 17, 0.6);
  auto m = metric_from_chart(c);
  auto k = curvature(m);
  double worst = 0;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!c.grid.interior(p, 3)) continue;
    auto ref = space_form_tensor(m.g_at(p), 1.0);
    cplx num = 0;
    double den = 0;
    for (std::size_t a = 0; a < ref.size(); ++a) {
      num += std::conj(ref[a]) * k.riem[a][p];
      den += std::norm(ref[a]);
    }
    double fit = num.real() / den;
    EXPECT_NEAR(fit, 2.0, 4e-2);
    for (std::size_t a = 0; a < ref.size(); ++a) worst = std::max(worst, std::abs(k.riem[a][p] - fit * ref[a]));
  }
  EXPECT_LT(worst, 5e-2);
}

TEST(Curvature, RicciFormMatchesIndependentLogDet) {
  auto c = fubini_study_chart(1, 65, 1.0);
  auto k = curvature(metric_from_chart(c));
  for (std::size_t p = 0; p < c.G.size(); ++p) {
    if (!c.grid.interior(p, 3)) continue;
    EXPECT_NEAR(std::abs(2.0 * k.ricci_form[0][p] - k.ricci[0][p]), 0.0, 2e-2);
  }
}

TEST(Ambient, RoundThreeSphere) {
  auto r = curvature_relations_check(round_sphere_sample(1));
  EXPECT_NEAR(r.ambient_scalar, 6.0, 1e-12);
  EXPECT_NEAR(r.transverse_scalar, 8.0, 1e-12);
  EXPECT_LT(r.ricci_residual, 1e-10);
  EXPECT_LT(r.scalar_residual, 1e-10);
}

TEST(Ambient, RoundFiveSphere) {
  auto r = curvature_relations_check(round_sphere_sample(2));
  EXPECT_NEAR(r.ambient_scalar, 20.0, 1e-12);
  EXPECT_NEAR(r.transverse_scalar, 24.0, 1e-12);
  EXPECT_LT(r.ricci_residual, 1e-10);
}

TEST(Ambient, FlatTransverse) {
  for (int n : {1, 2, 3}) {
    auto r = curvature_relations_check(flat_sample(n));
    EXPECT_NEAR(r.ambient_scalar, -2.0 * n, 1e-12);
    EXPECT_NEAR(r.transverse_scalar, 0.0, 1e-12);
  }
}

TEST(Ambient, RoundSphereConstantSectional) {
  std::mt19937_64 rng(11);
  for (int n : {1, 2}) {
    AmbientCurvature a(round_sphere_sample(n));
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd X = random_D(rng, n), Y = random_D(rng, n);
      double area = a.g(X, X) * a.g(Y, Y) - a.g(X, Y) * a.g(X, Y);
      double K = full_curvature_from_transverse(round_sphere_sample(n), X, Y, Y, X) / area;
      EXPECT_NEAR(K, 1.0, 1e-9);
      // planes containing xi
      Eigen::VectorXd xi = Eigen::VectorXd::Unit(2 * n + 1, 0);
      EXPECT_NEAR(a.full(X, xi, xi, X) / a.g(X, X), 1.0, 1e-12);
    }
  }
}

TEST(Ambient, FlatTransversePhiCorrection) {
  CurvatureSample s = flat_sample(1);
  Eigen::VectorXd X = Eigen::VectorXd::Unit(3, 1);
  AmbientCurvature a(s);
  Eigen::VectorXd Y = a.phi(X);
  // brute force of the correction with R^T = 0
  auto gf = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) { return u.dot(v); };
  auto P = [&](const Eigen::VectorXd& u) { return a.phi(u); };
  double direct = -gf(P(Y), Y) * gf(P(X), X) + gf(P(X), Y) * gf(P(Y), X) + 2.0 * gf(P(X), Y) * gf(P(Y), X);
  EXPECT_NEAR(full_curvature_from_transverse(s, X, Y, Y, X), direct, 1e-14);
  EXPECT_NEAR(direct, -3.0, 1e-14);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  EXPECT_EQ(full_curvature_from_transverse(s, X, Y, zero, zero), 0.0);
}

TEST(Ambient, RejectsReebComponent) {
  Eigen::VectorXd X = Eigen::VectorXd::Unit(3, 0);
  Eigen::VectorXd Y = Eigen::VectorXd::Unit(3, 1);
  try {
    full_curvature_from_transverse(round_sphere_sample(1), X, Y, Y, X);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::VectorNotInD);
  }
}

TEST(Ambient, ReebCurvatureIdentity) {
  std::mt19937_64 rng(5);
  auto s = round_sphere_sample(1);
  Eigen::VectorXd X = Eigen::VectorXd::Unit(3, 1);
  EXPECT_LT(reeb_curvature_check(s, X, X), 1e-14);
  EXPECT_LT(reeb_curvature_check(s, X, Eigen::VectorXd::Unit(3, 0)), 1e-14);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 40; ++t) {
    Eigen::VectorXd A(3), B(3);
    for (int i = 0; i < 3; ++i) {
      A(i) = nd(rng);
      B(i) = nd(rng);
    }
    EXPECT_LT(reeb_curvature_check(s, A, B), 1e-10);
  }
}

TEST(Ambient, PointwiseFromChart) {
  auto c = fubini_study_chart(1, 65, 1.0);
  auto m = metric_from_chart(c);
  auto k = curvature(m);
  std::size_t p0 = center_index(c.grid);
  auto r = curvature_relations_check(sample_at(m, k, p0));
  EXPECT_NEAR(r.ambient_scalar, 6.0, 2e-2);
  EXPECT_LT(r.ricci_residual, 1e-10);
  EXPECT_LT(r.scalar_residual, 1e-10);
}

TEST(SasakianSample, BlockStructureAndPhiSquare) {
  auto c = fubini_study_chart(2, 9, 0.8);
  auto m = metric_from_chart(c);
  for (std::size_t p = 0; p < m.size(); p += 97) {
    auto s = sasakian_sample(m.g_at(p));
    const int d = 5;
    EXPECT_EQ(s.full_metric(0, 0), 1.0);
    for (int a = 1; a < d; ++a) EXPECT_EQ(s.full_metric(0, a), 0.0);
    Eigen::MatrixXd xi_eta = Eigen::VectorXd::Unit(d, 0) * s.eta_component.transpose();
    EXPECT_LT((s.phi_tensor * s.phi_tensor - (-Eigen::MatrixXd::Identity(d, d) + xi_eta)).norm(), 1e-12);
    // Phi is an isometry of D
    EXPECT_LT((s.phi_tensor.transpose() * s.full_metric * s.phi_tensor - s.full_metric + xi_eta).norm(), 1e-12);
  }
}

TEST(DHomothetic, IdentityAndInverse) {
  auto c = fubini_study_chart(1, 17);
  auto same = d_homothetic(c, 1.0);
  EXPECT_EQ(same.G, c.G);
  auto back = d_homothetic(d_homothetic(c, 3.7), 1.0 / 3.7);
  for (std::size_t p = 0; p < c.G.size(); ++p) EXPECT_NEAR(back.G[p], c.G[p], 1e-12 * (1 + std::abs(c.G[p])));
  EXPECT_NEAR(back.eta_scale, 1.0, 1e-12);
  EXPECT_THROW(d_homothetic(c, 0.0), Error);
}

TEST(DHomothetic, RoundSphereBecomesFixedPoint) {
  auto c = fubini_study_chart(1, 65);
  auto m4 = metric_from_chart(d_homothetic(c, 4.0));
  auto k4 = curvature(m4);
  auto k1 = curvature(metric_from_chart(c));
  for (std::size_t p = 0; p < c.G.size(); ++p) {
    if (!c.grid.interior(p, 4)) continue;
    EXPECT_NEAR(std::abs(k4.ricci[0][p] - m4.g[0][p]), 0.0, 5e-3 * std::abs(m4.g[0][p]));
    EXPECT_NEAR(std::abs(k4.ricci[0][p] - k1.ricci[0][p]), 0.0, 1e-9);
  }
}

TEST(DHomothetic, VolumeScaling) {
  for (int n : {1, 2}) {
    auto c = n == 1 ? fubini_study_chart(1, 33) : fubini_study_chart(2, 9);
    double v1 = chart_volume(metric_from_chart(c));
    double v3 = chart_volume(metric_from_chart(d_homothetic(c, 3.0)));
    EXPECT_NEAR(v3 / v1, std::pow(3.0, n + 1), 1e-9);
  }
}

TEST(ChartIO, RoundTrip) {
  auto c = torus_chart(1, 16, 0.1);
  std::stringstream ss;
  write_chart(ss, c);
  auto r = read_chart(ss);
  EXPECT_EQ(r.G, c.G);
  EXPECT_EQ(r.grid.dims, c.grid.dims);
  EXPECT_EQ(r.grid.h, c.grid.h);
  EXPECT_EQ(r.boundary.kind, c.boundary.kind);
  EXPECT_LT((r.boundary.reference - c.boundary.reference).norm(), 1e-15);
}

TEST(ChartIO, RejectsForeignHeader) {
  std::stringstream ss("{\"format\":\"other\"}\n");
  EXPECT_THROW(read_chart(ss), Error);
}
