#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sasaki/errors.hpp"

namespace sasaki {

using json = nlohmann::json;

inline constexpr const char* kConfigSchema = "sasaki-config-v1";
inline constexpr const char* kReportSchema = "sasaki-report-v1";
inline constexpr const char* kCheckpointSchema = "sasaki-ckpt-v1";
inline constexpr const char* kCsvSchema = "sasaki-csv-v1";

// Flat scenario description; see README for the key list.
struct ScenarioConfig {
  std::string name;
  std::string geometry;  // round_sphere | football | chart_torus
  int n = 1;
  int p = 1, q = 1;
  int N = 64;
  std::string dt_policy = "cfl";  // cfl | fixed
  double dt = 0.0;
  double dt_fraction = 0.2;
  double t_end = 1.0;
  double tau0 = 1.0;
  std::vector<std::string> monitors;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  double checkpoint_cadence = 0.5;
  double perturbation = 0.0;  // amplitude of the P2 bump added to the initial potential
  double torus_eps = 0.1;
  double soliton_tol = 0.0;   // > 0 adds a verdict on the terminal soliton residual
  std::vector<double> reeb_rhos;
  double reeb_target = 0.0;
};

// ConfigInvalid carries "field: reason".
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);
void validate(const ScenarioConfig& cfg);
json to_json(const ScenarioConfig& cfg);

struct Series {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ManifestEntry {
  std::string file;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunReport {
  std::string status;  // pass | fail
  json summaries = json::object();
  std::vector<Verdict> verdicts;
  std::vector<ManifestEntry> manifest;
  std::vector<Series> series;
  std::filesystem::path output_dir;

  bool passed() const { return status == "pass"; }
};

// Runs a validated scenario and writes its artifacts. RunFailed wraps module errors after a checkpoint is written.
RunReport run(const ScenarioConfig& cfg);

// Artifact helpers.
std::string format_number(double v);
std::string csv_text(const Series& s);
Series parse_csv(const std::string& name, const std::string& text);
std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<double>& x, const std::vector<double>& y);
std::string sha256_hex(const std::string& bytes);
ManifestEntry write_artifact(const std::filesystem::path& dir, const std::string& file, const std::string& content);
json report_json(const ScenarioConfig& cfg, const RunReport& rep);

struct SeriesDiff {
  std::string series;
  std::string column;
  double max_deviation = 0.0;
};

struct CompareResult {
  std::vector<SeriesDiff> diffs;
  double max_deviation = 0.0;
};

// Per-column max deviation between two reports (paths to report.json or their directories).
CompareResult compare(const std::filesystem::path& a, const std::filesystem::path& b);

// Exit codes of the command-line tool.
enum ExitCode { kExitPass = 0, kExitAssertion = 2, kExitConfig = 3, kExitRuntime = 4 };

}  // namespace sasaki
