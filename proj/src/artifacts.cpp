#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sasaki/runner.hpp"

namespace sasaki {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one RFC 4180 record starting at pos; advances pos past the line break.
std::vector<std::string> csv_record(const std::string& text, std::size_t& pos) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  while (pos < text.size()) {
    char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          cur += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      break;
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_text(const Series& s) {
  std::string out;
  for (std::size_t c = 0; c < s.columns.size(); ++c) {
    if (c) out += ',';
    out += csv_field(s.columns[c]);
  }
  out += "\r\n";
  for (const auto& row : s.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_number(row[c]);
    }
    out += "\r\n";
  }
  return out;
}

Series parse_csv(const std::string& name, const std::string& text) {
  Series s;
  s.name = name;
  std::size_t pos = 0;
  if (text.empty()) fail(ErrorKind::SchemaMismatch, name + ": empty CSV");
  s.columns = csv_record(text, pos);
  while (pos < text.size()) {
    auto rec = csv_record(text, pos);
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != s.columns.size())
      fail(ErrorKind::SchemaMismatch, name + ": row " + std::to_string(s.rows.size() + 1) + " has " +
                                          std::to_string(rec.size()) + " fields, header has " +
                                          std::to_string(s.columns.size()));
    std::vector<double> row;
    row.reserve(rec.size());
    for (const auto& f : rec) {
      char* end = nullptr;
      double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0') fail(ErrorKind::SchemaMismatch, name + ": non-numeric field '" + f + "'");
      row.push_back(v);
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<double>& x, const std::vector<double>& y) {
  const double W = 640, H = 400, ml = 80, mr = 20, mt = 40, mb = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  const std::size_t m = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    x0 = std::min(x0, x[i]);
    x1 = std::max(x1, x[i]);
    y0 = std::min(y0, y[i]);
    y1 = std::max(y1, y[i]);
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-300) x1 = x0 + 1;
  if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y0))) {
    double pad = std::max(1e-12, 1e-6 * std::abs(y0));
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << short_number(xv) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << short_number(yv) << "</text>\n";
  }
  o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"13\">"
    << xml_escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
    << (mt + H - mb) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
  o << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    o << short_number(px(x[i])) << ',' << short_number(py(y[i])) << ' ';
  }
  o << "\"/>\n</svg>\n";
  return o.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorKind::RunFailed, "sha256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

ManifestEntry write_artifact(const std::filesystem::path& dir, const std::string& file, const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::RunFailed, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::RunFailed, "cannot write " + (dir / file).string());
  return {file, sha256_hex(content), content.size()};
}

json report_json(const ScenarioConfig& cfg, const RunReport& rep) {
  json j;
  j["schema"] = kReportSchema;
  j["csv_schema"] = kCsvSchema;
  j["scenario"] = cfg.name;
  j["config"] = to_json(cfg);
  j["config"].erase("output_dir");
  j["status"] = rep.status;
  j["summaries"] = rep.summaries;
  json v = json::array();
  for (const auto& x : rep.verdicts) v.push_back({{"name", x.name}, {"pass", x.pass}, {"detail", x.detail}});
  j["verdicts"] = v;
  json s = json::array();
  for (const auto& x : rep.series)
    s.push_back({{"name", x.name}, {"file", x.name + ".csv"}, {"columns", x.columns}, {"rows", x.rows.size()}});
  j["series"] = s;
  json m = json::array();
  for (const auto& x : rep.manifest) m.push_back({{"file", x.file}, {"sha256", x.sha256}, {"bytes", x.bytes}});
  j["manifest"] = m;
  return j;
}

}  // namespace sasaki
