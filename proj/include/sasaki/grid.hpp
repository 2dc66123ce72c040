#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "sasaki/errors.hpp"

namespace sasaki {

using cplx = std::complex<double>;
using RField = std::vector<double>;
using CField = std::vector<cplx>;

inline constexpr double kPi = std::numbers::pi;

enum class BoundaryKind { periodic, pole_compactified, open };
enum class Stencil { central2, spectral };

inline std::string boundary_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::periodic: return "periodic";
    case BoundaryKind::pole_compactified: return "pole_compactified";
    case BoundaryKind::open: return "open";
  }
  return "?";
}

// Rectangular lattice over the 2n real transverse coordinates.
// Axis 2i is Re z_i, axis 2i+1 is Im z_i. Row-major, last axis fastest.
struct Grid {
  int n = 1;
  std::vector<int> dims;
  std::vector<double> lo;
  std::vector<double> h;
  std::vector<bool> periodic;

  int axes() const { return static_cast<int>(dims.size()); }

  std::size_t size() const {
    std::size_t s = 1;
    for (int d : dims) s *= static_cast<std::size_t>(d);
    return s;
  }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = axes() - 1; a > axis; --a) s *= static_cast<std::size_t>(dims[a]);
    return s;
  }

  void unravel(std::size_t flat, std::vector<int>& idx) const {
    idx.resize(dims.size());
    for (int a = axes() - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(flat % dims[a]);
      flat /= dims[a];
    }
  }

  double coord(int axis, int i) const { return lo[axis] + h[axis] * i; }

  // Complex coordinates of a flat index.
  std::vector<cplx> z_at(std::size_t flat) const {
    std::vector<int> idx;
    unravel(flat, idx);
    std::vector<cplx> z(n);
    for (int i = 0; i < n; ++i) z[i] = cplx(coord(2 * i, idx[2 * i]), coord(2 * i + 1, idx[2 * i + 1]));
    return z;
  }

  double cell_volume() const {
    double v = 1.0;
    for (double s : h) v *= s;
    return v;
  }

  // True if the point is at least `margin` nodes away from every non-periodic end.
  bool interior(std::size_t flat, int margin = 1) const {
    std::vector<int> idx;
    unravel(flat, idx);
    for (int a = 0; a < axes(); ++a) {
      if (periodic[a]) continue;
      if (idx[a] < margin || idx[a] >= dims[a] - margin) return false;
    }
    return true;
  }
};

inline Grid make_grid(int n, const std::vector<int>& dims, const std::vector<double>& lo,
                      const std::vector<double>& hi, BoundaryKind kind) {
  Grid g;
  g.n = n;
  g.dims = dims;
  g.lo = lo;
  g.h.resize(dims.size());
  g.periodic.resize(dims.size());
  for (std::size_t a = 0; a < dims.size(); ++a) {
    bool per = kind == BoundaryKind::periodic || (kind == BoundaryKind::pole_compactified && a == 1);
    g.periodic[a] = per;
    // periodic axes exclude the duplicated endpoint
    g.h[a] = per ? (hi[a] - lo[a]) / dims[a] : (hi[a] - lo[a]) / (dims[a] - 1);
  }
  return g;
}

namespace detail {

template <class T>
void line_d1_fd(const T* in, T* out, int m, std::ptrdiff_t st, double h, bool per) {
  auto at = [&](int i) -> const T& { return in[i * st]; };
  if (per) {
    for (int i = 0; i < m; ++i) {
      int ip = (i + 1) % m, im = (i - 1 + m) % m;
      out[i * st] = (at(ip) - at(im)) / (2.0 * h);
    }
    return;
  }
  for (int i = 1; i < m - 1; ++i) out[i * st] = (at(i + 1) - at(i - 1)) / (2.0 * h);
  out[0] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
  out[(m - 1) * st] = (3.0 * at(m - 1) - 4.0 * at(m - 2) + at(m - 3)) / (2.0 * h);
}

template <class T>
void line_d2_fd(const T* in, T* out, int m, std::ptrdiff_t st, double h, bool per) {
  auto at = [&](int i) -> const T& { return in[i * st]; };
  double h2 = h * h;
  if (per) {
    for (int i = 0; i < m; ++i) {
      int ip = (i + 1) % m, im = (i - 1 + m) % m;
      out[i * st] = (at(ip) - 2.0 * at(i) + at(im)) / h2;
    }
    return;
  }
  for (int i = 1; i < m - 1; ++i) out[i * st] = (at(i + 1) - 2.0 * at(i) + at(i - 1)) / h2;
  out[0] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
  out[(m - 1) * st] = (2.0 * at(m - 1) - 5.0 * at(m - 2) + 4.0 * at(m - 3) - at(m - 4)) / h2;
}

// Spectral derivative of order 1 or 2 along one periodic line, in place on a buffer.
class SpectralLine {
 public:
  SpectralLine(int m, double period) : m_(m), period_(period) {
    in_ = fftw_alloc_complex(m);
    out_ = fftw_alloc_complex(m);
    fwd_ = fftw_plan_dft_1d(m, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_1d(m, out_, in_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~SpectralLine() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(in_);
    fftw_free(out_);
  }
  SpectralLine(const SpectralLine&) = delete;
  SpectralLine& operator=(const SpectralLine&) = delete;

  void apply(std::vector<cplx>& buf, int order) {
    for (int i = 0; i < m_; ++i) {
      in_[i][0] = buf[i].real();
      in_[i][1] = buf[i].imag();
    }
    fftw_execute(fwd_);
    double k0 = 2.0 * kPi / period_;
    for (int j = 0; j < m_; ++j) {
      int kk = j <= m_ / 2 ? j : j - m_;
      cplx c(out_[j][0], out_[j][1]);
      cplx f;
      if (order == 1) {
        f = (2 * j == m_) ? cplx(0.0) : cplx(0.0, k0 * kk) * c;
      } else {
        f = -(k0 * kk) * (k0 * kk) * c;
      }
      out_[j][0] = f.real() / m_;
      out_[j][1] = f.imag() / m_;
    }
    fftw_execute(bwd_);
    for (int i = 0; i < m_; ++i) buf[i] = cplx(in_[i][0], in_[i][1]);
  }

 private:
  int m_;
  double period_;
  fftw_complex* in_;
  fftw_complex* out_;
  fftw_plan fwd_, bwd_;
};

template <class T>
inline T from_cplx(const cplx& c) {
  if constexpr (std::is_same_v<T, double>) {
    return c.real();
  } else {
    return c;
  }
}

template <class T>
std::vector<T> axis_op(const std::vector<T>& f, const Grid& g, int axis, Stencil st, int order) {
  std::vector<T> out(f.size());
  const int m = g.dims[axis];
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride(axis));
  const std::size_t total = g.size();
  const std::size_t block = static_cast<std::size_t>(m) * s;
  if (st == Stencil::spectral) {
    if (!g.periodic[axis]) fail(ErrorKind::NonPeriodicChart, "spectral derivative along a non-periodic axis");
    SpectralLine line(m, g.h[axis] * m);
    std::vector<cplx> buf(m);
    for (std::size_t b0 = 0; b0 < total; b0 += block)
      for (std::ptrdiff_t r = 0; r < s; ++r) {
        std::size_t base = b0 + r;
        for (int i = 0; i < m; ++i) buf[i] = cplx(f[base + i * s]);
        line.apply(buf, order);
        for (int i = 0; i < m; ++i) out[base + i * s] = from_cplx<T>(buf[i]);
      }
    return out;
  }
  if (!g.periodic[axis] && m < 4) fail(ErrorKind::GridTooCoarse, "need at least 4 nodes on a bounded axis");
  for (std::size_t b0 = 0; b0 < total; b0 += block)
    for (std::ptrdiff_t r = 0; r < s; ++r) {
      std::size_t base = b0 + r;
      if (order == 1)
        line_d1_fd(f.data() + base, out.data() + base, m, s, g.h[axis], g.periodic[axis]);
      else
        line_d2_fd(f.data() + base, out.data() + base, m, s, g.h[axis], g.periodic[axis]);
    }
  return out;
}

}  // namespace detail

// Real-axis derivatives.
template <class T>
std::vector<T> d1(const std::vector<T>& f, const Grid& g, int axis, Stencil st) {
  return detail::axis_op(f, g, axis, st, 1);
}
template <class T>
std::vector<T> d2(const std::vector<T>& f, const Grid& g, int axis, Stencil st) {
  return detail::axis_op(f, g, axis, st, 2);
}

// Wirtinger derivatives: dz_i = (d_x - i d_y)/2, dzbar_i = (d_x + i d_y)/2.
template <class T>
CField dz(const std::vector<T>& f, const Grid& g, int i, Stencil st) {
  auto fx = d1(f, g, 2 * i, st);
  auto fy = d1(f, g, 2 * i + 1, st);
  CField out(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) out[p] = 0.5 * (cplx(fx[p]) - cplx(0, 1) * cplx(fy[p]));
  return out;
}
template <class T>
CField dzbar(const std::vector<T>& f, const Grid& g, int i, Stencil st) {
  auto fx = d1(f, g, 2 * i, st);
  auto fy = d1(f, g, 2 * i + 1, st);
  CField out(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) out[p] = 0.5 * (cplx(fx[p]) + cplx(0, 1) * cplx(fy[p]));
  return out;
}

// d_k dbar_l f with pure second-difference stencils on repeated axes.
template <class T>
CField ddbar(const std::vector<T>& f, const Grid& g, int k, int l, Stencil st) {
  const std::size_t P = f.size();
  CField out(P);
  const cplx I(0, 1);
  if (k == l) {
    auto fxx = d2(f, g, 2 * k, st);
    auto fyy = d2(f, g, 2 * k + 1, st);
    for (std::size_t p = 0; p < P; ++p) out[p] = 0.25 * (cplx(fxx[p]) + cplx(fyy[p]));
    return out;
  }
  auto fxk = d1(f, g, 2 * k, st);
  auto fyk = d1(f, g, 2 * k + 1, st);
  auto fxkxl = d1(fxk, g, 2 * l, st);
  auto fykyl = d1(fyk, g, 2 * l + 1, st);
  auto fxkyl = d1(fxk, g, 2 * l + 1, st);
  auto fykxl = d1(fyk, g, 2 * l, st);
  for (std::size_t p = 0; p < P; ++p)
    out[p] = 0.25 * (cplx(fxkxl[p]) + cplx(fykyl[p]) + I * (cplx(fxkyl[p]) - cplx(fykxl[p])));
  return out;
}

// Trapezoid weights on the lattice (periodic axes uniform, bounded axes halved at ends).
inline RField lattice_weights(const Grid& g) {
  RField w(g.size(), g.cell_volume());
  std::vector<int> idx;
  for (std::size_t p = 0; p < w.size(); ++p) {
    g.unravel(p, idx);
    for (int a = 0; a < g.axes(); ++a)
      if (!g.periodic[a] && (idx[a] == 0 || idx[a] == g.dims[a] - 1)) w[p] *= 0.5;
  }
  return w;
}

}  // namespace sasaki
