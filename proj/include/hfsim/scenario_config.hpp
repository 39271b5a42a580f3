#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hfsim/cost_model.hpp"
#include "hfsim/errors.hpp"
#include "hfsim/hypervisor.hpp"
#include "hfsim/simulation.hpp"
#include "hfsim/threat.hpp"

namespace hfsim {

enum class StrategyKind { Baseline, Hrk, Hf };

std::string_view to_string(StrategyKind kind);

struct StrategySpec {
  std::string label;
  StrategyKind kind = StrategyKind::Baseline;
  std::size_t batch_k = 1;
  ScheduleMode schedule = ScheduleMode::Periodic;
  Ticks period = 4 * kTicksPerSecond;
  Ticks jitter = 0;
  std::uint64_t schedule_seed = 0;
  std::size_t hf_batch = 0;

  bool operator==(const StrategySpec&) const = default;

  // Jittered schedules draw from schedule_seed mixed with the run seed, so
  // repeats see different firing times.
  StrategyConfig instantiate(std::uint64_t run_seed) const;
};

// Evenly spaced persistent tampers: attack i lands at start + i*(end-start)/(count-1)
// on object (i * object_stride) mod N.
struct AttackSweep {
  std::size_t count = 0;
  Ticks start = 0;
  Ticks end = 0;
  std::size_t object_stride = 1;
  ByteFlip mutation;

  bool operator==(const AttackSweep&) const = default;
};

struct ScenarioConfig {
  std::string name;
  std::size_t repeats = 1;
  std::uint64_t seed = 1;
  MachineSetup machine;
  WorkloadSpec workload;
  CostModel costs;
  std::vector<StrategySpec> strategies;
  std::vector<std::string> attack_labels;
  std::vector<AttackScript> attacks;
  std::optional<AttackSweep> sweep;

  bool operator==(const ScenarioConfig&) const = default;

  // Explicit attacks in file order, then the sweep.
  std::vector<AttackScript> expanded_attacks() const;
};

struct ConfigIssue {
  std::string key;  // "section.key" or "section"
  std::string reason;
};

// Carries every problem found, not just the first.
class ConfigParseError : public ConfigError {
 public:
  explicit ConfigParseError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

// `base_dir` resolves `include = <file>` lines. Throws ConfigParseError.
ScenarioConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);

// Canonical, include-free text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ScenarioConfig& config);
// FNV-1a of the canonical text, as 16 hex digits.
std::string config_digest(const ScenarioConfig& config);

}  // namespace hfsim
