#include "hfsim/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace hfsim {

namespace {

using nlohmann::json;

json stats_json(const Stats& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"count", s.count}}; }

std::string attack_label(const ScenarioConfig& cfg, std::size_t index) {
  if (index < cfg.attack_labels.size()) return cfg.attack_labels[index];
  return "sweep." + std::to_string(index - cfg.attack_labels.size());
}

struct Job {
  int strategy = -1;  // -1: baseline
  std::uint64_t seed = 0;
  ScenarioResult result;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

}  // namespace

Stats summarize(const std::vector<double>& values) {
  Stats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

ComparisonReport run_config(const ScenarioConfig& config, const RunConfigOptions& options) {
  const std::vector<AttackScript> attacks = config.expanded_attacks();
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    const std::uint64_t seed = config.seed + r;
    jobs.push_back({-1, seed, {}});
    for (std::size_t s = 0; s < config.strategies.size(); ++s) jobs.push_back({static_cast<int>(s), seed, {}});
  }

  // Runs share only immutable inputs; results land in their own slot.
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        const StrategyConfig strategy =
            job.strategy < 0 ? StrategyConfig{BaselineStrategy{}}
                             : config.strategies[static_cast<std::size_t>(job.strategy)].instantiate(job.seed);
        RunOptions run_opts;
        std::ofstream trace;
        if (!options.trace_dir.empty()) {
          const std::string label =
              job.strategy < 0 ? "baseline" : config.strategies[static_cast<std::size_t>(job.strategy)].label;
          trace.open(options.trace_dir / ("trace_" + label + "_" + std::to_string(job.seed) + ".jsonl"));
          run_opts.trace = &trace;
        }
        job.result = run_scenario(config.machine, strategy, config.workload, attacks, config.costs, job.seed, run_opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ComparisonReport report;
  report.name = config.name;
  report.config_digest = config_digest(config);
  report.repeats = config.repeats;
  report.base_seed = config.seed;
  report.strategies.resize(config.strategies.size());
  for (std::size_t s = 0; s < config.strategies.size(); ++s) {
    report.strategies[s].label = config.strategies[s].label;
    report.strategies[s].kind = std::string(to_string(config.strategies[s].kind));
  }
  for (auto& job : jobs) {
    if (job.strategy < 0) {
      report.baseline_runs.push_back(std::move(job.result));
    } else {
      report.strategies[static_cast<std::size_t>(job.strategy)].runs.push_back(std::move(job.result));
    }
  }

  for (auto& summary : report.strategies) {
    std::vector<double> overhead, sys, ctx, latency, handler;
    summary.attacks.resize(attacks.size());
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      summary.attacks[a].index = a;
      summary.attacks[a].label = attack_label(config, a);
      summary.attacks[a].kind = std::string(kind_name(attacks[a]));
    }
    for (std::size_t r = 0; r < summary.runs.size(); ++r) {
      const ScenarioResult& run = summary.runs[r];
      const OverheadSummary o = overhead_report(run, report.baseline_runs[r]);
      overhead.push_back(o.total_pct);
      sys.push_back(o.syscall_latency_pct);
      ctx.push_back(o.ctxswitch_latency_pct);
      handler.push_back(to_seconds(run.max_handler_duration));
      for (const auto& d : run.detections) latency.push_back(to_seconds(d.latency()));
      summary.traps += run.traps.size();
      for (std::size_t a = 0; a < run.attacks.size(); ++a) {
        const AttackOutcome& out = run.attacks[a];
        AttackSummary& as = summary.attacks[a];
        as.attempted += out.attempted;
        as.applied += out.applied;
        as.trapped += out.trapped;
        if (out.detected_at) ++as.detected_runs;
        if (out.evaded) {
          ++as.evaded_runs;
          ++summary.evaded;
        }
      }
    }
    summary.overhead_pct = summarize(overhead);
    summary.syscall_latency_pct = summarize(sys);
    summary.ctxswitch_latency_pct = summarize(ctx);
    summary.detection_latency = summarize(latency);
    summary.max_handler_duration = summarize(handler);
  }
  return report;
}

json ComparisonReport::to_json() const {
  json baseline = json::array();
  for (const auto& r : baseline_runs) baseline.push_back(hfsim::to_json(r));
  json strategies_json = json::array();
  for (const auto& s : strategies) {
    json attacks = json::array();
    for (const auto& a : s.attacks) {
      attacks.push_back({{"index", a.index},
                         {"label", a.label},
                         {"kind", a.kind},
                         {"attempted", a.attempted},
                         {"applied", a.applied},
                         {"trapped", a.trapped},
                         {"detected_runs", a.detected_runs},
                         {"evaded_runs", a.evaded_runs}});
    }
    json runs = json::array();
    for (const auto& r : s.runs) runs.push_back(hfsim::to_json(r));
    json detection = stats_json(s.detection_latency);
    detection["worst"] = s.detection_latency.max;
    strategies_json.push_back({{"label", s.label},
                               {"kind", s.kind},
                               {"overhead_pct", stats_json(s.overhead_pct)},
                               {"syscall_latency_pct", stats_json(s.syscall_latency_pct)},
                               {"ctxswitch_latency_pct", stats_json(s.ctxswitch_latency_pct)},
                               {"detection_latency_s", detection},
                               {"max_handler_duration_s", stats_json(s.max_handler_duration)},
                               {"traps", s.traps},
                               {"evaded", s.evaded},
                               {"attacks", attacks},
                               {"runs", runs}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"tool_version", kToolVersion},
          {"name", name},
          {"config_digest", config_digest},
          {"repeats", repeats},
          {"base_seed", base_seed},
          {"baseline", {{"runs", baseline}}},
          {"strategies", strategies_json}};
}

std::string ComparisonReport::to_table() const {
  std::ostringstream out;
  out << "scenario " << name << "  digest " << config_digest << "  repeats " << repeats << "  seeds " << base_seed
      << ".." << base_seed + repeats - 1 << "\n\n";
  out << std::left << std::setw(10) << "strategy" << std::setw(10) << "kind" << std::right << std::setw(24)
      << "overhead % [min,max]" << std::setw(12) << "syscall +%" << std::setw(10) << "ctxsw +%" << std::setw(12)
      << "detections" << std::setw(12) << "det.mean s" << std::setw(13) << "det.worst s" << std::setw(11)
      << "check s" << std::setw(8) << "traps" << std::setw(8) << "evaded" << "\n";
  out << std::fixed;
  for (const auto& s : strategies) {
    std::ostringstream overhead;
    overhead << std::fixed << std::setprecision(2) << s.overhead_pct.mean << " [" << s.overhead_pct.min << ","
             << s.overhead_pct.max << "]";
    out << std::left << std::setw(10) << s.label << std::setw(10) << s.kind << std::right << std::setw(24)
        << overhead.str() << std::setprecision(2) << std::setw(12) << s.syscall_latency_pct.mean << std::setw(10)
        << s.ctxswitch_latency_pct.mean << std::setw(12) << s.detection_latency.count << std::setprecision(3)
        << std::setw(12) << s.detection_latency.mean << std::setw(13) << s.detection_latency.max << std::setprecision(4)
        << std::setw(11) << s.max_handler_duration.max << std::setw(8) << s.traps << std::setw(8) << s.evaded << "\n";
  }
  for (const auto& s : strategies) {
    if (s.attacks.empty()) continue;
    out << "\nattacks under " << s.label << ":\n";
    std::size_t sweep_count = 0, sweep_detected = 0, sweep_evaded = 0;
    for (const auto& a : s.attacks) {
      if (a.label.rfind("sweep.", 0) == 0) {
        ++sweep_count;
        sweep_detected += a.detected_runs;
        sweep_evaded += a.evaded_runs;
        continue;
      }
      out << "  " << std::left << std::setw(14) << a.label << std::setw(12) << a.kind << std::right
          << "attempted " << a.attempted << "  applied " << a.applied << "  trapped " << a.trapped << "  detected "
          << a.detected_runs << "/" << repeats << "  evaded " << a.evaded_runs << "\n";
    }
    if (sweep_count > 0) {
      out << "  sweep         " << sweep_count << " persistent tampers  detected " << sweep_detected << "/"
          << sweep_count * repeats << "  evaded " << sweep_evaded << "\n";
    }
  }
  return out.str();
}

void write_report(const ComparisonReport& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path staging = dir / ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    write_file(staging / "report.json", report.to_json().dump(2) + "\n");
    write_file(staging / "report.txt", report.to_table());
    auto write_traps = [&](const std::string& label, const ScenarioResult& r) {
      std::string lines;
      for (const auto& t : r.traps) lines += to_json_line(t) + "\n";
      write_file(staging / ("traps_" + label + "_" + std::to_string(r.seed) + ".jsonl"), lines);
    };
    for (const auto& s : report.strategies) {
      for (const auto& r : s.runs) write_traps(s.label, r);
    }
    for (const auto& entry : fs::directory_iterator(staging)) {
      fs::rename(entry.path(), dir / entry.path().filename());
    }
    fs::remove_all(staging);
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
}

DiffResult diff_reports(const json& a, const json& b, double tol_pct) {
  if (a.value("config_digest", std::string()) != b.value("config_digest", std::string())) {
    throw ConfigError("reports come from different configs (digest " + a.value("config_digest", std::string("?")) +
                      " vs " + b.value("config_digest", std::string("?")) + ")");
  }
  DiffResult diff;
  auto fmt = [](double v) {
    std::ostringstream o;
    o << std::setprecision(6) << v;
    return o.str();
  };
  auto compare = [&](const std::string& label, const std::string& metric, double va, double vb, bool relative) {
    if (va == vb) return;
    const double delta = vb - va;
    const bool from_zero = relative && va == 0.0;
    const double measure = !relative ? delta : from_zero ? (delta > 0 ? HUGE_VAL : 0.0) : delta / std::fabs(va) * 100.0;
    const bool regression = measure > tol_pct;
    std::string line = label + "." + metric + ": " + fmt(va) + " -> " + fmt(vb) + " (";
    if (from_zero) {
      line += "from zero)";
    } else {
      line += std::string(delta >= 0 ? "+" : "") + fmt(measure) + (relative ? "%" : " pp") + ")";
    }
    if (regression) {
      line += " REGRESSION";
      diff.flagged = true;
    }
    diff.lines.push_back(std::move(line));
  };
  for (const auto& sa : a.at("strategies")) {
    const std::string label = sa.at("label").get<std::string>();
    const json* match = nullptr;
    for (const auto& sb : b.at("strategies")) {
      if (sb.at("label") == sa.at("label")) match = &sb;
    }
    if (!match) {
      diff.lines.push_back(label + ": missing from second report");
      diff.flagged = true;
      continue;
    }
    const json& sb = *match;
    compare(label, "overhead_pct.mean", sa["overhead_pct"]["mean"], sb["overhead_pct"]["mean"], false);
    compare(label, "overhead_pct.max", sa["overhead_pct"]["max"], sb["overhead_pct"]["max"], false);
    compare(label, "syscall_latency_pct.mean", sa["syscall_latency_pct"]["mean"], sb["syscall_latency_pct"]["mean"],
            false);
    compare(label, "ctxswitch_latency_pct.mean", sa["ctxswitch_latency_pct"]["mean"],
            sb["ctxswitch_latency_pct"]["mean"], false);
    compare(label, "detection_latency_s.mean", sa["detection_latency_s"]["mean"], sb["detection_latency_s"]["mean"],
            true);
    compare(label, "detection_latency_s.worst", sa["detection_latency_s"]["worst"],
            sb["detection_latency_s"]["worst"], true);
    compare(label, "traps", sa["traps"].get<double>(), sb["traps"].get<double>(), true);
    compare(label, "evaded", sa["evaded"].get<double>(), sb["evaded"].get<double>(), true);
  }
  return diff;
}

}  // namespace hfsim
