#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "hfsim/cost_model.hpp"
#include "hfsim/guest_machine.hpp"
#include "hfsim/integrity.hpp"
#include "hfsim/protection.hpp"
#include "hfsim/time.hpp"

namespace hfsim {

enum class ScheduleMode { Periodic, PeriodicJittered, GuestVisible };

std::string_view to_string(ScheduleMode mode);

// What a guest-resident observer can learn about the firing schedule. Only a
// GuestVisible schedule hands one out.
struct VisibleSchedule {
  Ticks period = 0;

  Ticks firing_time(std::size_t index) const { return period * static_cast<Ticks>(index); }
};

// Firing i (1-based) happens at i*period, offset in the jittered mode by
// (draw_i mod (2*jitter+1)) - jitter ticks, where draw_i is the i-th output of
// an mt19937_64 seeded with `seed`. Offsets are independent across firings.
class FiringSchedule {
 public:
  static FiringSchedule periodic(Ticks period);
  static FiringSchedule jittered(Ticks period, Ticks jitter, std::uint64_t seed);
  static FiringSchedule guest_visible(Ticks period);

  ScheduleMode mode() const { return mode_; }
  Ticks period() const { return period_; }
  Ticks jitter() const { return jitter_; }
  std::uint64_t seed() const { return seed_; }

  Ticks firing_time(std::size_t index) const;
  // Largest gap between consecutive firings.
  Ticks max_gap() const { return period_ + 2 * jitter_; }

 private:
  FiringSchedule(ScheduleMode mode, Ticks period, Ticks jitter, std::uint64_t seed);

  ScheduleMode mode_;
  Ticks period_;
  Ticks jitter_;
  std::uint64_t seed_;
  mutable std::mt19937_64 rng_;
  mutable std::vector<Ticks> offsets_;
};

// Hypervisor-owned interrupt source. Firing times never live in guest memory.
class VirtualDevice {
 public:
  std::uint32_t vector() const { return vector_; }
  const FiringSchedule& schedule() const { return schedule_; }

  // Time of the next firing by index; generated lazily.
  Ticks next_firing();
  std::size_t fired() const { return next_index_ - 1; }

  std::optional<VisibleSchedule> guest_view() const;

 private:
  friend VirtualDevice install_virtual_device(const GuestMachine&, std::uint32_t, const FiringSchedule&);
  VirtualDevice(std::uint32_t vector, FiringSchedule schedule) : vector_(vector), schedule_(schedule) {}

  std::uint32_t vector_;
  FiringSchedule schedule_;
  std::size_t next_index_ = 1;
};

// Throws ConfigError unless a module is loaded with a matching handler vector.
VirtualDevice install_virtual_device(const GuestMachine& machine, std::uint32_t vector,
                                     const FiringSchedule& schedule);

// Write-protects the module and the page(s) holding the IDT, and labels those
// regions so traps are classified.
void install_protections(const GuestMachine& machine, ProtectionRegistry& protections, Ticks now = 0);

struct InterruptReport {
  Ticks start = 0;
  Ticks duration = 0;
  CheckReport check;
  bool handler_ran = false;
  // Set when the IDT entry for the device vector does not lead into the module.
  std::optional<Addr> subverted_handler;
  bool subverted = false;
};

// Unlock module data pages, dispatch the device vector through the guest IDT
// to the in-guest checker, relock. The handler checks `batch` objects
// (0 = the whole table) and bumps a run counter in its data page.
InterruptReport fire_interrupt(VirtualDevice& device, GuestMachine& machine, ProtectionRegistry& protections,
                               BaselineTable& baselines, const CostModel& costs, Ticks now,
                               std::size_t batch = 0);

struct VmexitReport {
  Ticks start = 0;
  Ticks duration = 0;
  CheckReport check;
};

// MOV_CR* exit of the in-hypervisor checker: k objects from the cursor,
// charged with the transition pair and per-page introspection mapping.
VmexitReport on_control_register_write(const GuestMachine& machine, BaselineTable& baselines, std::size_t k,
                                       const CostModel& costs, Ticks now);

}  // namespace hfsim
