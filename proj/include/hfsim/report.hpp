#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hfsim/scenario_config.hpp"
#include "hfsim/simulation.hpp"

namespace hfsim {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct Stats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

Stats summarize(const std::vector<double>& values);

struct AttackSummary {
  std::size_t index = 0;
  std::string label;
  std::string kind;
  std::size_t attempted = 0;  // summed over repeats
  std::size_t applied = 0;
  std::size_t trapped = 0;
  std::size_t detected_runs = 0;
  std::size_t evaded_runs = 0;
};

struct StrategySummary {
  std::string label;
  std::string kind;
  Stats overhead_pct;
  Stats syscall_latency_pct;
  Stats ctxswitch_latency_pct;
  Stats detection_latency;  // seconds, over every detection of every repeat
  Stats max_handler_duration;  // seconds
  std::size_t traps = 0;
  std::size_t evaded = 0;
  std::vector<AttackSummary> attacks;
  std::vector<ScenarioResult> runs;  // by seed
};

struct ComparisonReport {
  std::string name;
  std::string config_digest;
  std::size_t repeats = 0;
  std::uint64_t base_seed = 0;
  std::vector<ScenarioResult> baseline_runs;
  std::vector<StrategySummary> strategies;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct RunConfigOptions {
  std::filesystem::path trace_dir;  // empty: no traces
  unsigned threads = 0;             // 0: hardware concurrency
};

// Runs every strategy plus a no-checking baseline for seeds
// base..base+repeats-1. Throws on any run failure.
ComparisonReport run_config(const ScenarioConfig& config, const RunConfigOptions& options = {});

// Writes report.json, report.txt and per-run trap logs (JSON lines) into
// `dir`. Files are staged and renamed, so a failure leaves no partial report.
void write_report(const ComparisonReport& report, const std::filesystem::path& dir);

struct DiffResult {
  std::vector<std::string> lines;  // one per changed metric
  bool flagged = false;
};

// Overheads are compared in absolute percentage points, latencies in percent
// of the reference value; increases beyond tol_pct are flagged. Throws
// ConfigError when the config digests differ.
DiffResult diff_reports(const nlohmann::json& a, const nlohmann::json& b, double tol_pct);

}  // namespace hfsim
