#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "sasaki/chart.hpp"

namespace sasaki {

// Layout: one JSON header line terminated by '\n', then `count` little-endian IEEE-754 doubles
// holding G in row-major order (last axis fastest).
inline constexpr const char* kChartFormat = "sasaki-chart-v1";

namespace detail {

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail(ErrorKind::SchemaMismatch, "truncated sample block");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline BoundaryKind boundary_from_name(const std::string& s) {
  if (s == "periodic") return BoundaryKind::periodic;
  if (s == "pole_compactified") return BoundaryKind::pole_compactified;
  if (s == "open") return BoundaryKind::open;
  fail(ErrorKind::SchemaMismatch, "unknown boundary kind " + s);
}

}  // namespace detail

inline nlohmann::json chart_header(const LocalChart& c) {
  nlohmann::json h;
  h["format"] = kChartFormat;
  h["n"] = c.grid.n;
  h["dims"] = c.grid.dims;
  h["lo"] = c.grid.lo;
  h["spacing"] = c.grid.h;
  nlohmann::json b;
  b["kind"] = boundary_name(c.boundary.kind);
  b["beta_minus"] = c.boundary.cone.beta_minus;
  b["beta_plus"] = c.boundary.cone.beta_plus;
  if (c.boundary.reference.size() > 0) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int i = 0; i < c.boundary.reference.rows(); ++i)
      for (int j = 0; j < c.boundary.reference.cols(); ++j) {
        re.push_back(c.boundary.reference(i, j).real());
        im.push_back(c.boundary.reference(i, j).imag());
      }
    b["reference_re"] = re;
    b["reference_im"] = im;
  }
  h["boundary"] = b;
  h["stencil"] = c.stencil == Stencil::spectral ? "spectral" : "central2";
  h["eta_scale"] = c.eta_scale;
  h["fiber_length"] = c.fiber_length;
  h["count"] = c.G.size();
  h["byte_order"] = "little";
  return h;
}

inline void write_chart(std::ostream& os, const LocalChart& c) {
  os << chart_header(c).dump() << '\n';
  for (double v : c.G) detail::put_f64(os, v);
}

inline LocalChart chart_from_header(const nlohmann::json& h, std::istream& is) {
  if (h.value("format", "") != kChartFormat) fail(ErrorKind::SchemaMismatch, "not a sasaki-chart-v1 stream");
  Grid g;
  g.n = h.at("n").get<int>();
  g.dims = h.at("dims").get<std::vector<int>>();
  g.lo = h.at("lo").get<std::vector<double>>();
  g.h = h.at("spacing").get<std::vector<double>>();
  const auto& b = h.at("boundary");
  BoundarySpec spec;
  spec.kind = detail::boundary_from_name(b.at("kind").get<std::string>());
  spec.cone.beta_minus = b.value("beta_minus", 1.0);
  spec.cone.beta_plus = b.value("beta_plus", 1.0);
  g.periodic.resize(g.dims.size());
  for (std::size_t a = 0; a < g.dims.size(); ++a)
    g.periodic[a] = spec.kind == BoundaryKind::periodic || (spec.kind == BoundaryKind::pole_compactified && a == 1);
  if (b.contains("reference_re")) {
    auto re = b.at("reference_re").get<std::vector<double>>();
    auto im = b.at("reference_im").get<std::vector<double>>();
    spec.reference.resize(g.n, g.n);
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) spec.reference(i, j) = cplx(re[i * g.n + j], im[i * g.n + j]);
  }
  std::size_t count = h.at("count").get<std::size_t>();
  if (count != g.size()) fail(ErrorKind::SchemaMismatch, "sample count does not match dims");
  RField G(count);
  for (auto& v : G) v = detail::get_f64(is);
  Stencil st = h.value("stencil", "central2") == "spectral" ? Stencil::spectral : Stencil::central2;
  LocalChart c = build_chart(std::move(G), g, spec, st);
  c.eta_scale = h.value("eta_scale", 1.0);
  c.fiber_length = h.value("fiber_length", 1.0);
  return c;
}

inline LocalChart read_chart(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::SchemaMismatch, "missing chart header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, std::string("bad chart header: ") + e.what());
  }
  return chart_from_header(h, is);
}

}  // namespace sasaki
