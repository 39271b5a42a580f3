// hfsim command line: run, diff and validate scenario configs.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hfsim/hfsim.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

int exit_code(hfsim_status st) {
  switch (st) {
    case HFSIM_OK: return kExitOk;
    case HFSIM_ERR_USAGE: return kExitUsage;
    case HFSIM_ERR_CONFIG: return kExitConfig;
    case HFSIM_ERR_IO: return kExitConfig;
    default: return kExitRun;
  }
}

int report_error(hfsim_status st) {
  std::cerr << "hfsim: " << hfsim_last_error() << "\n";
  return exit_code(st);
}

struct Config {
  hfsim_config* p = nullptr;
  ~Config() { hfsim_config_free(p); }
};

struct Report {
  hfsim_report* p = nullptr;
  ~Report() { hfsim_report_free(p); }
};

struct Text {
  char* p = nullptr;
  ~Text() { hfsim_string_free(p); }
};

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

int cmd_run(const std::string& path, const std::string& out_dir, int repeats, std::int64_t seed, bool seed_set,
            bool trace) {
  Config cfg;
  if (auto st = hfsim_config_load(path.c_str(), &cfg.p); st != HFSIM_OK) return report_error(st);
  if (repeats > 0) {
    if (auto st = hfsim_config_set_repeats(cfg.p, static_cast<std::uint32_t>(repeats)); st != HFSIM_OK)
      return report_error(st);
  }
  if (seed_set) hfsim_config_set_seed(cfg.p, static_cast<std::uint64_t>(seed));

  const std::string trace_dir = out_dir + "/traces";
  Report report;
  if (auto st = hfsim_run(cfg.p, trace ? trace_dir.c_str() : nullptr, &report.p); st != HFSIM_OK)
    return report_error(st);
  if (auto st = hfsim_report_write(report.p, out_dir.c_str()); st != HFSIM_OK) return report_error(st);
  Text table;
  if (auto st = hfsim_report_table(report.p, &table.p); st != HFSIM_OK) return report_error(st);
  std::cout << table.p;
  return kExitOk;
}

int cmd_diff(const std::string& a_path, const std::string& b_path, double tol) {
  std::string a, b;
  if (!read_file(a_path, a)) {
    std::cerr << "hfsim: cannot read '" << a_path << "'\n";
    return kExitConfig;
  }
  if (!read_file(b_path, b)) {
    std::cerr << "hfsim: cannot read '" << b_path << "'\n";
    return kExitConfig;
  }
  Text text;
  int flagged = 0;
  if (auto st = hfsim_diff(a.c_str(), b.c_str(), tol, &text.p, &flagged); st != HFSIM_OK) return report_error(st);
  std::cout << text.p;
  return flagged ? kExitRun : kExitOk;
}

int cmd_validate(const std::string& path, bool print) {
  Config cfg;
  if (auto st = hfsim_config_load(path.c_str(), &cfg.p); st != HFSIM_OK) return report_error(st);
  Text digest;
  if (auto st = hfsim_config_digest(cfg.p, &digest.p); st != HFSIM_OK) return report_error(st);
  if (print) {
    Text text;
    if (auto st = hfsim_config_serialize(cfg.p, &text.p); st != HFSIM_OK) return report_error(st);
    std::cout << text.p;
  }
  std::cout << "ok " << digest.p << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hfsim: deterministic integrity-monitoring simulator"};
  app.set_version_flag("--version", std::string(hfsim_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int repeats = 0;
  std::int64_t seed = 0;
  bool trace = false;
  auto* run = app.add_subcommand("run", "Run a scenario config and write a report directory");
  run->add_option("config", config_path, "Scenario config file")->required();
  run->add_option("--out,-o", out_dir, "Output directory")->required();
  run->add_option("--repeats,-r", repeats, "Override repeat count")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed,-s", seed, "Override base seed")->check(CLI::NonNegativeNumber);
  run->add_flag("--trace", trace, "Write per-run event traces under <out>/traces");

  std::string a_path, b_path;
  double tol = 1.0;
  auto* diff = app.add_subcommand("diff", "Compare two report.json files");
  diff->add_option("a", a_path, "Reference report.json")->required();
  diff->add_option("b", b_path, "Candidate report.json")->required();
  diff->add_option("--tol", tol, "Regression tolerance in percent")->check(CLI::NonNegativeNumber);

  bool print = false;
  auto* validate = app.add_subcommand("validate", "Parse and check a config without running it");
  validate->add_option("config", config_path, "Scenario config file")->required();
  validate->add_flag("--print", print, "Print the normalized config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (run->parsed()) return cmd_run(config_path, out_dir, repeats, seed, seed_opt->count() > 0, trace);
  if (diff->parsed()) return cmd_diff(a_path, b_path, tol);
  return cmd_validate(config_path, print);
}
