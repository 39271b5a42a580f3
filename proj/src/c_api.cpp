#include "hfsim/hfsim.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "hfsim/integrity.hpp"
#include "hfsim/report.hpp"
#include "hfsim/scenario_config.hpp"

struct hfsim_config {
  hfsim::ScenarioConfig value;
};

struct hfsim_report {
  hfsim::ComparisonReport value;
};

namespace {

thread_local std::string tl_error;

hfsim_status fail(hfsim_status status, std::string msg) {
  tl_error = std::move(msg);
  return status;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

hfsim_status emit(const std::string& s, char** out) {
  *out = dup_string(s);
  return *out ? HFSIM_OK : fail(HFSIM_ERR_RUN, "out of memory");
}

// Maps the exception taxonomy onto status codes.
template <class F>
hfsim_status guarded(hfsim_status run_failure, F&& body) {
  try {
    tl_error.clear();
    return body();
  } catch (const hfsim::ConfigError& e) {
    return fail(HFSIM_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(run_failure, e.what());
  } catch (...) {
    return fail(run_failure, "unknown error");
  }
}

#define HFSIM_REQUIRE(ptr) \
  do { if (!(ptr)) return fail(HFSIM_ERR_USAGE, "null pointer: " #ptr); } while (0)

}  // namespace

extern "C" {

const char* hfsim_version(void) { return hfsim::kToolVersion; }

const char* hfsim_last_error(void) { return tl_error.c_str(); }

void hfsim_string_free(char* s) { std::free(s); }

uint64_t hfsim_digest(const void* data, size_t len) {
  if (!data) len = 0;
  return hfsim::compute_digest(std::span(static_cast<const std::uint8_t*>(data), len)).value;
}

hfsim_status hfsim_config_load(const char* path, hfsim_config** out) {
  HFSIM_REQUIRE(path);
  HFSIM_REQUIRE(out);
  *out = nullptr;
  return guarded(HFSIM_ERR_IO, [&] {
    *out = new hfsim_config{hfsim::load_config(path)};
    return HFSIM_OK;
  });
}

hfsim_status hfsim_config_parse(const char* text, const char* base_dir, hfsim_config** out) {
  HFSIM_REQUIRE(text);
  HFSIM_REQUIRE(out);
  *out = nullptr;
  return guarded(HFSIM_ERR_CONFIG, [&] {
    *out = new hfsim_config{hfsim::parse_config(text, base_dir ? base_dir : "")};
    return HFSIM_OK;
  });
}

void hfsim_config_free(hfsim_config* cfg) { delete cfg; }

hfsim_status hfsim_config_set_repeats(hfsim_config* cfg, uint32_t repeats) {
  HFSIM_REQUIRE(cfg);
  if (repeats == 0) return fail(HFSIM_ERR_USAGE, "repeats must be >= 1");
  cfg->value.repeats = repeats;
  return HFSIM_OK;
}

hfsim_status hfsim_config_set_seed(hfsim_config* cfg, uint64_t seed) {
  HFSIM_REQUIRE(cfg);
  cfg->value.seed = seed;
  return HFSIM_OK;
}

hfsim_status hfsim_config_serialize(const hfsim_config* cfg, char** out_text) {
  HFSIM_REQUIRE(cfg);
  HFSIM_REQUIRE(out_text);
  return guarded(HFSIM_ERR_RUN, [&] { return emit(hfsim::serialize_config(cfg->value), out_text); });
}

hfsim_status hfsim_config_digest(const hfsim_config* cfg, char** out_hex) {
  HFSIM_REQUIRE(cfg);
  HFSIM_REQUIRE(out_hex);
  return guarded(HFSIM_ERR_RUN, [&] { return emit(hfsim::config_digest(cfg->value), out_hex); });
}

hfsim_status hfsim_run(const hfsim_config* cfg, const char* trace_dir, hfsim_report** out) {
  HFSIM_REQUIRE(cfg);
  HFSIM_REQUIRE(out);
  *out = nullptr;
  return guarded(HFSIM_ERR_RUN, [&] {
    hfsim::RunConfigOptions opts;
    if (trace_dir) {
      opts.trace_dir = trace_dir;
      std::filesystem::create_directories(opts.trace_dir);
    }
    *out = new hfsim_report{hfsim::run_config(cfg->value, opts)};
    return HFSIM_OK;
  });
}

void hfsim_report_free(hfsim_report* report) { delete report; }

hfsim_status hfsim_report_json(const hfsim_report* report, char** out_json) {
  HFSIM_REQUIRE(report);
  HFSIM_REQUIRE(out_json);
  return guarded(HFSIM_ERR_RUN, [&] { return emit(report->value.to_json().dump(2) + "\n", out_json); });
}

hfsim_status hfsim_report_table(const hfsim_report* report, char** out_text) {
  HFSIM_REQUIRE(report);
  HFSIM_REQUIRE(out_text);
  return guarded(HFSIM_ERR_RUN, [&] { return emit(report->value.to_table(), out_text); });
}

hfsim_status hfsim_report_write(const hfsim_report* report, const char* out_dir) {
  HFSIM_REQUIRE(report);
  HFSIM_REQUIRE(out_dir);
  return guarded(HFSIM_ERR_RUN, [&] {
    hfsim::write_report(report->value, out_dir);
    return HFSIM_OK;
  });
}

hfsim_status hfsim_diff(const char* report_a_json, const char* report_b_json, double tol_pct, char** out_text,
                        int* flagged) {
  HFSIM_REQUIRE(report_a_json);
  HFSIM_REQUIRE(report_b_json);
  HFSIM_REQUIRE(out_text);
  HFSIM_REQUIRE(flagged);
  return guarded(HFSIM_ERR_CONFIG, [&] {
    const auto a = nlohmann::json::parse(report_a_json);
    const auto b = nlohmann::json::parse(report_b_json);
    const hfsim::DiffResult diff = hfsim::diff_reports(a, b, tol_pct);
    std::string text;
    for (const auto& line : diff.lines) text += line + "\n";
    *flagged = diff.flagged ? 1 : 0;
    return emit(text, out_text);
  });
}

}  // extern "C"
