#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sasaki/runner.hpp"

namespace sasaki {

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::SchemaMismatch, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Loaded {
  std::filesystem::path dir;
  json report;
};

Loaded load(const std::filesystem::path& p) {
  Loaded l;
  std::filesystem::path file = std::filesystem::is_directory(p) ? p / "report.json" : p;
  l.dir = file.parent_path();
  try {
    l.report = json::parse(slurp(file));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::SchemaMismatch, file.string() + " is not JSON: " + e.what());
  }
  if (l.report.value("schema", "") != kReportSchema)
    fail(ErrorKind::SchemaMismatch, file.string() + " is not a " + kReportSchema + " report");
  return l;
}

std::set<std::string> monitor_set(const json& r) {
  auto v = r.at("config").at("monitors").get<std::vector<std::string>>();
  return {v.begin(), v.end()};
}

double deviation(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return 0.0;
  if (a == b) return 0.0;
  return std::abs(a - b);
}

}  // namespace

CompareResult compare(const std::filesystem::path& a, const std::filesystem::path& b) {
  Loaded A = load(a), B = load(b);
  const auto na = A.report.at("scenario").get<std::string>(), nb = B.report.at("scenario").get<std::string>();
  if (na != nb) fail(ErrorKind::SchemaMismatch, "scenario names differ: " + na + " vs " + nb);
  if (monitor_set(A.report) != monitor_set(B.report))
    fail(ErrorKind::SchemaMismatch, "monitor sets differ for scenario " + na);
  CompareResult out;
  for (const auto& sa : A.report.at("series")) {
    const auto name = sa.at("name").get<std::string>();
    const json* sb = nullptr;
    for (const auto& x : B.report.at("series"))
      if (x.at("name") == name) sb = &x;
    if (!sb) fail(ErrorKind::SchemaMismatch, "series " + name + " missing from second report");
    Series x = parse_csv(name, slurp(A.dir / sa.at("file").get<std::string>()));
    Series y = parse_csv(name, slurp(B.dir / sb->at("file").get<std::string>()));
    if (x.columns != y.columns) fail(ErrorKind::SchemaMismatch, "series " + name + " has different columns");
    if (x.rows.size() != y.rows.size())
      fail(ErrorKind::SchemaMismatch, "series " + name + " has " + std::to_string(x.rows.size()) + " vs " +
                                          std::to_string(y.rows.size()) + " rows");
    for (std::size_t r = 0; r < x.rows.size(); ++r)
      if (deviation(x.rows[r][0], y.rows[r][0]) > 1e-12 * std::max(1.0, std::abs(x.rows[r][0])))
        fail(ErrorKind::SchemaMismatch, "series " + name + " rows sit at different " + x.columns[0] + " values");
    for (std::size_t c = 1; c < x.columns.size(); ++c) {
      SeriesDiff d{name, x.columns[c], 0.0};
      for (std::size_t r = 0; r < x.rows.size(); ++r)
        d.max_deviation = std::max(d.max_deviation, deviation(x.rows[r][c], y.rows[r][c]));
      out.max_deviation = std::max(out.max_deviation, d.max_deviation);
      out.diffs.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace sasaki
