#include <gtest/gtest.h>

#include "sasaki/hodge.hpp"
#include "sasaki/models.hpp"

using namespace sasaki;

namespace {

LocalChart open_flat_chart(int n, int N) {
  BoundarySpec b;
  b.kind = BoundaryKind::open;
  return chart_from_function([](const std::vector<cplx>& z) {
    double s = 0;
    for (auto v : z) s += 0.5 * std::norm(v);
    return s;
  }, cube_grid(n, N, 1.0, BoundaryKind::open), b);
}

double pairing_residual(const TransverseMetricField& m, int p, int q, bool bar, std::uint64_t seed) {
  const Grid& g = m.grid();
  const int n = m.n;
  if (bar) {
    auto phi = random_form(g, n, p, q, seed), psi = random_form(g, n, p, q + 1, seed + 100);
    return std::abs(l2_inner(m, delbar_B(m, phi), psi) - l2_inner(m, phi, delbar_star(m, psi)));
  }
  auto phi = random_form(g, n, p, q, seed), psi = random_form(g, n, p + 1, q, seed + 100);
  return std::abs(l2_inner(m, del_B(m, phi), psi) - l2_inner(m, phi, del_star(m, psi)));
}

}  // namespace

TEST(BasicForm, DegreeGuards) {
  EXPECT_THROW(zero_form(1, 2, 0, 4), Error);
  auto m = metric_from_chart(torus_chart(1, 16, 0.1));
  auto top = zero_form(1, 1, 1, m.size());
  try {
    del_B(m, top);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegreeOverflow);
  }
  try {
    delbar_star(m, zero_form(1, 1, 0, m.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegreeUnderflow);
  }
}

TEST(Del, ConstantAndLinear) {
  auto c = open_flat_chart(1, 16);
  auto m = metric_from_chart(c);
  CField one(m.size(), 1.0), rez(m.size());
  for (std::size_t p = 0; p < rez.size(); ++p) rez[p] = c.grid.z_at(p)[0].real();
  EXPECT_LT(max_abs(del_B(m, function_form(1, one))), 1e-14);
  auto d = del_B(m, function_form(1, rez));
  auto db = delbar_B(m, function_form(1, rez));
  for (std::size_t p = 0; p < rez.size(); ++p) {
    EXPECT_NEAR(std::abs(d.c[0][p] - 0.5), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(db.c[0][p] - 0.5), 0.0, 1e-12);
  }
}

TEST(Del, SquaresVanish) {
  auto m = metric_from_chart(torus_chart(2, 8, 0.1));
  auto f = function_form(2, random_smooth_field(m.grid(), 3));
  EXPECT_LT(max_abs(delbar_B(m, delbar_B(m, f))), 1e-10);
  EXPECT_LT(max_abs(del_B(m, del_B(m, f))), 1e-10);
  auto w = random_form(m.grid(), 2, 0, 1, 4);
  EXPECT_LT(max_abs(del_B(m, del_B(m, w))), 1e-10);
}

TEST(Adjoint, ConstantFormOnFlatChart) {
  auto m = metric_from_chart(flat_chart(1, 16));
  auto psi = zero_form(1, 0, 1, m.size());
  psi.c[0] = CField(m.size(), cplx(0.3, -0.7));
  EXPECT_LT(max_abs(delbar_star(m, psi)), 1e-13);
}

TEST(Adjoint, PairingConvergesSecondOrder) {
  auto m32 = metric_from_chart(torus_chart(1, 32, 0.15));
  auto m64 = metric_from_chart(torus_chart(1, 64, 0.15));
  for (bool bar : {true, false}) {
    int p = bar ? 1 : 0, q = bar ? 0 : 1;
    double r32 = pairing_residual(m32, p, q, bar, 7), r64 = pairing_residual(m64, p, q, bar, 7);
    EXPECT_GT(r32 / r64, 3.2);
    EXPECT_LT(r64, 1e-1);
  }
  // functions pair exactly on periodic lattices
  EXPECT_LT(pairing_residual(m64, 0, 0, true, 9), 1e-10);
}

TEST(Adjoint, PairingAtN64IsSmall) {
  auto m = metric_from_chart(torus_chart(1, 64, 0.05));
  EXPECT_LT(pairing_residual(m, 0, 0, true, 21), 1e-3);
  EXPECT_LT(pairing_residual(m, 1, 0, true, 22) / 100.0, 1e-3);
}

TEST(Adjoint, SelfPairingOfGradient) {
  auto m = metric_from_chart(torus_chart(1, 64, 0.15));
  auto f = function_form(1, random_smooth_field(m.grid(), 5));
  auto df = delbar_B(m, f);
  cplx lhs = l2_inner(m, df, df), rhs = l2_inner(m, f, delbar_star(m, df));
  EXPECT_LT(std::abs(lhs - rhs), 1e-9 * std::abs(lhs));
}

TEST(Adjoint, TwoDimensionalPairing) {
  auto m8 = metric_from_chart(torus_chart(2, 8, 0.1, Stencil::spectral));
  auto m12 = metric_from_chart(torus_chart(2, 12, 0.1, Stencil::spectral));
  for (int p = 0; p <= 1; ++p)
    for (int q = 0; q <= 1; ++q) {
      double size = std::abs(l2_inner(m12, random_form(m12.grid(), 2, p, q + 1, 3), random_form(m12.grid(), 2, p, q + 1, 3)));
      EXPECT_LT(pairing_residual(m12, p, q, true, 31), 1e-2 * size);
      EXPECT_LT(pairing_residual(m12, p, q, false, 32), 1e-2 * size);
      EXPECT_LT(pairing_residual(m12, p, q, true, 31), pairing_residual(m8, p, q, true, 31) + 1e-12);
    }
}

TEST(Kahler, FlatDzIdentity) {
  auto c = flat_chart(1, 16);
  auto m = metric_from_chart(c);
  auto dzf = zero_form(1, 1, 0, m.size());
  dzf.c[0] = CField(m.size(), 1.0);
  auto r = kahler_identities_residual(m, dzf);
  EXPECT_LT(r.lambda_delbar, 1e-13);
  EXPECT_LT(max_abs(lambda_op(m, delbar_B(m, dzf))), 1e-13);
}

TEST(Kahler, LambdaIsAdjointOfL) {
  auto m = metric_from_chart(torus_chart(2, 8, 0.1));
  auto a = random_form(m.grid(), 2, 0, 1, 3), b = random_form(m.grid(), 2, 1, 2, 4);
  cplx lhs = l2_inner(m, lefschetz(m, a), b), rhs = l2_inner(m, a, lambda_op(m, b));
  EXPECT_LT(std::abs(lhs - rhs), 1e-10 * (1 + std::abs(lhs)));
}

TEST(Kahler, IdentitiesConvergeOnCurvedTorus) {
  KahlerResiduals r[2];
  int Ns[2] = {32, 64};
  for (int s = 0; s < 2; ++s) {
    auto m = metric_from_chart(torus_chart(1, Ns[s], 0.15));
    auto f = random_form(m.grid(), 1, 1, 1, 8);
    auto g = random_form(m.grid(), 1, 0, 1, 9);
    auto a = kahler_identities_residual(m, f), b = kahler_identities_residual(m, g);
    r[s].lambda_del = std::max(a.lambda_del, b.lambda_del);
    r[s].lambda_delbar = std::max(a.lambda_delbar, b.lambda_delbar);
    r[s].basic_vs_delbar = std::max(a.basic_vs_delbar, b.basic_vs_delbar);
    r[s].cross = std::max(a.cross, b.cross);
  }
  EXPECT_GT(r[0].lambda_del / r[1].lambda_del, 3.2);
  EXPECT_GT(r[0].lambda_delbar / r[1].lambda_delbar, 3.2);
  EXPECT_GT(r[0].basic_vs_delbar / r[1].basic_vs_delbar, 3.2);
  EXPECT_GT(r[0].cross / r[1].cross, 3.2);
}

TEST(Kahler, FubiniStudyPatch) {
  double prev = 0;
  for (int N : {33, 65}) {
    auto m = metric_from_chart(fubini_study_chart(1, N, 1.0));
    auto f = random_form(m.grid(), 1, 1, 1, 2);
    auto r = kahler_identities_residual(m, f, N / 8);
    double worst = std::max({r.lambda_del, r.lambda_delbar, r.basic_vs_delbar});
    if (prev > 0) EXPECT_GT(prev / worst, 3.0);
    prev = worst;
  }
}

TEST(Kahler, FunctionLaplacianAgreesWithDelbarLaplacian) {
  double prev = 0;
  for (int N : {32, 64}) {
    auto m = metric_from_chart(torus_chart(1, N, 0.15));
    CField f = random_smooth_field(m.grid(), 12);
    CField a = laplace_function(m, f);
    BasicForm b = laplacian_delbar(m, function_form(1, f));
    double r = 0;
    for (std::size_t p = 0; p < f.size(); ++p) r = std::max(r, std::abs(a[p] + b.c[0][p]));
    if (prev > 0) EXPECT_GT(prev / r, 3.2);
    prev = r;
  }
}

TEST(Kahler, TwoDimensionalBattery) {
  auto m = metric_from_chart(torus_chart(2, 12, 0.1, Stencil::spectral));
  for (auto [p, q] : {std::pair{1, 1}, std::pair{0, 2}, std::pair{2, 1}}) {
    auto f = random_form(m.grid(), 2, p, q, 40 + p + q);
    auto r = kahler_identities_residual(m, f);
    double scale = max_abs(laplacian_delbar(m, f));
    EXPECT_LT(r.lambda_del, 0.05 * scale);
    EXPECT_LT(r.basic_vs_delbar, 0.05 * scale);
    EXPECT_LT(r.cross, 0.05 * scale);
  }
}

TEST(Weitzenbock, FlatChartRoughLaplacian) {
  auto m = metric_from_chart(flat_chart(1, 32));
  auto k = curvature(m);
  auto f = random_form(m.grid(), 1, 0, 1, 3);
  auto w = weitzenbock_residual(m, k, f);
  EXPECT_LT(w.ricci, 1e-2);
  EXPECT_LT(max_abs(weitzenbock_ricci_term(m, k, f)), 1e-12);
}

TEST(Weitzenbock, ConvergesOnCurvedCharts) {
  double prev_g = 0, prev_r = 0;
  for (int N : {32, 64}) {
    auto m = metric_from_chart(torus_chart(1, N, 0.15));
    auto k = curvature(m);
    auto w = weitzenbock_residual(m, k, random_form(m.grid(), 1, 0, 1, 6));
    if (prev_g > 0) {
      EXPECT_GT(prev_g / w.general, 3.2);
      EXPECT_GT(prev_r / w.ricci, 3.2);
    }
    prev_g = w.general;
    prev_r = w.ricci;
  }
}

TEST(Weitzenbock, FubiniStudyZeroOneForms) {
  double prev = 0;
  for (int N : {33, 65}) {
    auto m = metric_from_chart(fubini_study_chart(1, N, 1.0));
    auto k = curvature(m);
    auto w = weitzenbock_residual(m, k, random_form(m.grid(), 1, 0, 1, 4), N / 8);
    if (prev > 0) EXPECT_GT(prev / w.ricci, 3.0);
    prev = w.ricci;
  }
}

TEST(Weitzenbock, BochnerIntegrals) {
  auto m = metric_from_chart(torus_chart(1, 64, 0.15, Stencil::spectral));
  auto k = curvature(m);
  auto f = random_form(m.grid(), 1, 0, 1, 14);
  auto b = bochner_integrals(m, k, f);
  EXPECT_NEAR(b.laplace_pairing, b.energy, 1e-8 * b.energy);
  EXPECT_NEAR(b.energy, b.gradient + b.ricci, 1e-8 * b.energy);
}

TEST(Ibp, ConstantFormsOnFlatChart) {
  auto m = metric_from_chart(flat_chart(1, 16));
  auto f = zero_form(1, 1, 1, m.size());
  f.c[0] = CField(m.size(), 2.0);
  auto r = ibp_check(m, f, f);
  EXPECT_LT(std::abs(r.I1), 1e-12);
  EXPECT_LT(std::abs(r.I2), 1e-12);
}

TEST(Ibp, RejectsOpenCharts) {
  auto m = metric_from_chart(fubini_study_chart(1, 16));
  auto f = function_form(1, CField(m.size(), 1.0));
  try {
    ibp_check(m, f, f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPeriodicChart);
  }
}

TEST(Ibp, RandomFormsFiniteDifference) {
  double prev = 0;
  for (int N : {32, 64}) {
    auto m = metric_from_chart(torus_chart(1, N, 0.15));
    auto r = ibp_check(m, random_form(m.grid(), 1, 1, 1, 3), random_form(m.grid(), 1, 1, 1, 4));
    if (prev > 0) EXPECT_GT(prev / r.residual, 3.2);
    prev = r.residual;
  }
}

TEST(Ibp, SpectralIsTight) {
  auto m = metric_from_chart(torus_chart(1, 64, 0.15, Stencil::spectral));
  for (auto [p, q] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}}) {
    auto r = ibp_check(m, random_form(m.grid(), 1, p, q, 5), random_form(m.grid(), 1, p, q, 6));
    EXPECT_LT(r.residual, 1e-8);
  }
}

TEST(Ddc, MatchesIDelDelbar) {
  double prev = 0;
  for (int N : {32, 64}) {
    auto m = metric_from_chart(torus_chart(1, N, 0.15));
    double r = ddc_residual(m, random_smooth_field(m.grid(), 2));
    if (prev > 0) EXPECT_GT(prev / r, 3.2);
    prev = r;
  }
  auto m8 = metric_from_chart(torus_chart(2, 8, 0.1));
  auto m16 = metric_from_chart(torus_chart(2, 16, 0.1));
  double r8 = ddc_residual(m8, random_smooth_field(m8.grid(), 2));
  double r16 = ddc_residual(m16, random_smooth_field(m16.grid(), 2));
  EXPECT_GT(r8 / r16, 2.5);
}
