#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "hfsim/hfsim.h"

namespace {

const char* kConfig = R"(
[scenario]
name = capi
seed = 5

[machine]
page_count = 8

[objects]
count = 40

[workload]
syscall_rate = 200
ctxswitch_rate = 50
horizon = 6

[costs]
vmexit = 0.000002
vmentry = 0.000001
interrupt_delivery = 0.000005
map_page = 0.00002
hash_per_byte = 0.0000001
syscall_base = 0.000001
ctxswitch_base = 0.000005

[strategy.hrk]
kind = hrk
batch_k = 1

[strategy.hf]
kind = hf
period = 2

[attack.c]
kind = code
offset = 0
at = 1
)";

std::string take(char* s) {
  std::string out = s ? s : "";
  hfsim_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("version and digest") {
  CHECK(std::string(hfsim_version()) == "1.0.0");
  CHECK(hfsim_digest("", 0) == 0xcbf29ce484222325ull);
  CHECK(hfsim_digest("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(hfsim_digest(nullptr, 10) == 0xcbf29ce484222325ull);
}

TEST_CASE("null arguments are usage errors") {
  hfsim_config* cfg = nullptr;
  CHECK(hfsim_config_parse(nullptr, nullptr, &cfg) == HFSIM_ERR_USAGE);
  CHECK(std::string(hfsim_last_error()).find("null") != std::string::npos);
  CHECK(hfsim_config_parse(kConfig, nullptr, nullptr) == HFSIM_ERR_USAGE);
  CHECK(hfsim_run(nullptr, nullptr, nullptr) == HFSIM_ERR_USAGE);
  hfsim_config_free(nullptr);
  hfsim_report_free(nullptr);
  hfsim_string_free(nullptr);
}

TEST_CASE("config errors carry messages") {
  hfsim_config* cfg = nullptr;
  CHECK(hfsim_config_parse("[machine]\nbogus = 1\n", nullptr, &cfg) == HFSIM_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(hfsim_last_error()).find("machine.bogus") != std::string::npos);
  CHECK(hfsim_config_load("/nonexistent/file.cfg", &cfg) != HFSIM_OK);
}

TEST_CASE("parse, run, export") {
  hfsim_config* cfg = nullptr;
  REQUIRE(hfsim_config_parse(kConfig, nullptr, &cfg) == HFSIM_OK);
  CHECK(hfsim_config_set_repeats(cfg, 0) == HFSIM_ERR_USAGE);
  CHECK(hfsim_config_set_repeats(cfg, 2) == HFSIM_OK);
  CHECK(hfsim_config_set_seed(cfg, 9) == HFSIM_OK);

  char* text = nullptr;
  REQUIRE(hfsim_config_serialize(cfg, &text) == HFSIM_OK);
  const std::string serialized = take(text);
  CHECK(serialized.find("repeats = 2") != std::string::npos);
  CHECK(serialized.find("seed = 9") != std::string::npos);

  hfsim_config* again = nullptr;
  REQUIRE(hfsim_config_parse(serialized.c_str(), nullptr, &again) == HFSIM_OK);
  char* d1 = nullptr;
  char* d2 = nullptr;
  hfsim_config_digest(cfg, &d1);
  hfsim_config_digest(again, &d2);
  const std::string digest = take(d1);
  CHECK(digest == take(d2));
  CHECK(digest.size() == 16);
  hfsim_config_free(again);

  hfsim_report* report = nullptr;
  REQUIRE(hfsim_run(cfg, nullptr, &report) == HFSIM_OK);
  char* json = nullptr;
  REQUIRE(hfsim_report_json(report, &json) == HFSIM_OK);
  const std::string j = take(json);
  CHECK(j.find("\"config_digest\": \"" + digest + "\"") != std::string::npos);
  char* table = nullptr;
  REQUIRE(hfsim_report_table(report, &table) == HFSIM_OK);
  CHECK(take(table).find("hrk") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "hfsim_capi_out";
  std::filesystem::remove_all(dir);
  CHECK(hfsim_report_write(report, dir.string().c_str()) == HFSIM_OK);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "traps_hf_10.jsonl"));
  std::filesystem::remove_all(dir);

  char* diff = nullptr;
  int flagged = -1;
  REQUIRE(hfsim_diff(j.c_str(), j.c_str(), 1.0, &diff, &flagged) == HFSIM_OK);
  CHECK(take(diff).empty());
  CHECK(flagged == 0);
  CHECK(hfsim_diff("{not json", j.c_str(), 1.0, &diff, &flagged) != HFSIM_OK);

  hfsim_report_free(report);
  hfsim_config_free(cfg);
}

TEST_CASE("run with traces") {
  hfsim_config* cfg = nullptr;
  REQUIRE(hfsim_config_parse(kConfig, nullptr, &cfg) == HFSIM_OK);
  const auto dir = std::filesystem::temp_directory_path() / "hfsim_capi_traces";
  std::filesystem::remove_all(dir);
  hfsim_report* report = nullptr;
  REQUIRE(hfsim_run(cfg, dir.string().c_str(), &report) == HFSIM_OK);
  CHECK(std::filesystem::exists(dir / "trace_hf_5.jsonl"));
  CHECK(std::filesystem::exists(dir / "trace_hrk_5.jsonl"));
  CHECK(std::filesystem::exists(dir / "trace_baseline_5.jsonl"));
  std::filesystem::remove_all(dir);
  hfsim_report_free(report);
  hfsim_config_free(cfg);
}
