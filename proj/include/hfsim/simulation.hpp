#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hfsim/cost_model.hpp"
#include "hfsim/guest_machine.hpp"
#include "hfsim/hypervisor.hpp"
#include "hfsim/threat.hpp"
#include "hfsim/time.hpp"

namespace hfsim {

// ---------------------------------------------------------------------------
// Scenario inputs

enum class Placement { Packed, Spread };

// Guest layout: page 0 holds a 256-vector IDT, pages 1-2 the monitoring module
// (one code page, one data page), objects start at page 3.
struct MachineSetup {
  std::size_t page_count = 0;
  std::size_t page_size = 4096;
  std::size_t object_count = 0;
  std::size_t object_size = 64;
  Placement placement = Placement::Packed;

  bool operator==(const MachineSetup&) const = default;
};

inline constexpr std::uint32_t kMonitorVector = 0x20;
inline constexpr std::size_t kIdtVectors = 256;
inline constexpr std::size_t kFirstObjectPage = 3;

// Smallest page count that fits the layout.
std::size_t required_pages(const MachineSetup& setup);
// Builds the trusted initial state; throws ConfigError if it does not fit.
GuestMachine build_machine(const MachineSetup& setup);

enum class Arrival { Fixed, Poisson };

struct WorkloadSpec {
  double syscall_rate = 0.0;     // events per native second
  double ctxswitch_rate = 0.0;
  Arrival arrival = Arrival::Poisson;
  Ticks horizon = 0;             // native duration of the workload

  bool operator==(const WorkloadSpec&) const = default;
};

struct BaselineStrategy {};
struct HrkStrategy {
  std::size_t batch_k = 1;
};
struct HfStrategy {
  FiringSchedule schedule = FiringSchedule::periodic(4 * kTicksPerSecond);
  std::size_t batch = 0;  // objects per interrupt, 0 = full sweep
};

using StrategyConfig = std::variant<BaselineStrategy, HrkStrategy, HfStrategy>;

std::string strategy_name(const StrategyConfig& strategy);

// ---------------------------------------------------------------------------
// Event ordering

enum class EventKind : std::uint8_t { Trap = 0, DeviceFiring = 1, Attack = 2, Workload = 3 };

struct Event {
  Ticks time = 0;
  EventKind kind = EventKind::Workload;
  std::uint64_t seq = 0;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  Ticks native = 0;  // workload events are pinned to guest-native time
};

// Orders by time, then kind (trap < device firing < attack < workload), then
// insertion sequence.
class EventQueue {
 public:
  void push(Ticks time, EventKind kind, std::uint32_t a = 0, std::uint32_t b = 0, Ticks native = 0);
  // Precondition: !empty().
  Event next_event();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& x, const Event& y) const;
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// Results

struct DetectionRecord {
  std::size_t attack = 0;
  std::string target;  // "object:<id>", "idtr", "idt:<vector>", "module+<offset>"
  Ticks tamper_time = 0;
  Ticks detected_time = 0;

  Ticks latency() const { return detected_time - tamper_time; }
};

struct ChargeBreakdown {
  Ticks vmexit_checks = 0;
  Ticks interrupts = 0;
  Ticks traps = 0;

  Ticks total() const { return vmexit_checks + interrupts + traps; }
};

struct EventLatency {
  double syscall = 0.0;    // mean, ticks
  double ctxswitch = 0.0;
};

struct ScenarioResult {
  std::string strategy;
  std::uint64_t seed = 0;
  Ticks horizon = 0;
  Ticks total_time = 0;  // wall time at which the workload finished
  ChargeBreakdown charged;
  double overhead_fraction = 0.0;

  std::size_t syscalls = 0;
  std::size_t ctxswitches = 0;
  std::size_t vmexits = 0;
  std::size_t interrupts = 0;
  std::size_t subversions = 0;
  std::size_t object_violations = 0;
  std::size_t idtr_violations = 0;
  Ticks max_handler_duration = 0;  // longest single check (interrupt or VMExit)

  EventLatency latency;
  std::vector<DetectionRecord> detections;
  std::vector<TrapRecord> traps;
  std::vector<AttackOutcome> attacks;

  // Wall time equals native time plus every charged stall.
  bool accounting_holds() const { return total_time == horizon + charged.total(); }
};

nlohmann::json to_json(const ScenarioResult& result);

struct RunOptions {
  std::ostream* trace = nullptr;  // JSON lines, one per processed event
};

// Throws ConfigError for inconsistent inputs before simulated time starts.
ScenarioResult run_scenario(const MachineSetup& setup, const StrategyConfig& strategy, const WorkloadSpec& workload,
                            std::span<const AttackScript> attacks, const CostModel& costs, std::uint64_t seed,
                            const RunOptions& options = {});
// Same, on a caller-built machine in its trusted state.
ScenarioResult run_scenario(GuestMachine machine, const StrategyConfig& strategy, const WorkloadSpec& workload,
                            std::span<const AttackScript> attacks, const CostModel& costs, std::uint64_t seed,
                            const RunOptions& options = {});

struct OverheadSummary {
  double total_pct = 0.0;
  double syscall_latency_pct = 0.0;
  double ctxswitch_latency_pct = 0.0;
};

// Both results must come from the same workload, seed and horizon.
OverheadSummary overhead_report(const ScenarioResult& strategy, const ScenarioResult& baseline);

}  // namespace hfsim
