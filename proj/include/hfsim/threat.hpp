#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hfsim/guest_machine.hpp"
#include "hfsim/hypervisor.hpp"
#include "hfsim/protection.hpp"
#include "hfsim/time.hpp"

namespace hfsim {

struct ByteFlip {
  std::size_t offset = 0;
  std::uint8_t xor_mask = 0xff;

  bool operator==(const ByteFlip&) const = default;
};

// Dirty over [start, end): the mutation lands at start, the original bytes
// come back at end.
struct TimeWindow {
  Ticks start = 0;
  Ticks end = 0;

  bool operator==(const TimeWindow&) const = default;
};

enum class ScheduleKnowledge { None, GuestVisibleOnly };

struct PersistentTamper {
  ObjectId object = 0;
  Ticks at = 0;
  ByteFlip mutation;

  bool operator==(const PersistentTamper&) const = default;
};

struct TransientTamper {
  ObjectId object = 0;
  std::vector<TimeWindow> dirty_windows;
  ScheduleKnowledge knowledge = ScheduleKnowledge::None;
  ByteFlip mutation;

  bool operator==(const TransientTamper&) const = default;
};

struct CodeTamper {
  std::size_t offset = 0;  // from the module base
  Ticks at = 0;
  std::uint8_t value = 0xcc;

  bool operator==(const CodeTamper&) const = default;
};

struct IdtTamper {
  std::uint32_t vector = 0;
  Addr new_handler = 0;
  Ticks at = 0;

  bool operator==(const IdtTamper&) const = default;
};

struct IdtrTamper {
  Addr new_base = 0;
  Ticks at = 0;

  bool operator==(const IdtrTamper&) const = default;
};

using AttackScript = std::variant<PersistentTamper, TransientTamper, CodeTamper, IdtTamper, IdtrTamper>;

std::string_view kind_name(const AttackScript& script);
// Time of the first malicious write.
Ticks first_action_time(const AttackScript& script);

// Throws ConfigError for scripts that cannot apply to this machine
// (unknown object, unordered or overlapping windows, vector beyond the IDT).
void validate_attack(const AttackScript& script, const GuestMachine& machine);

struct AttackOutcome {
  std::size_t attempted = 0;
  std::size_t applied = 0;
  std::size_t trapped = 0;
  std::optional<Ticks> detected_at;
  bool evaded = false;  // dirty at some instant and never detected
};

enum class StepAction { Apply, Dirty, Restore };

struct AttackStep {
  Ticks at = 0;
  StepAction action = StepAction::Apply;
};

// Timed writes for one script inside [0, horizon]. A transient attacker that
// knows the schedule and is handed a visible one restores the clean bytes one
// tick before every known firing inside a dirty window and re-dirties at the
// firing instant, which orders after the firing itself.
std::vector<AttackStep> plan_attack(const AttackScript& script, Ticks horizon,
                                    const std::optional<VisibleSchedule>& visible);

// Result of one attacker write.
struct StepEffect {
  bool attempted = false;
  WriteOutcome outcome;
};

StepEffect apply_persistent_tamper(const PersistentTamper& script, GuestMachine& machine,
                                   ProtectionRegistry& protections, Ticks now);
// `clean` holds the object's trusted bytes, written back on Restore.
StepEffect apply_transient_tamper(const TransientTamper& script, StepAction action,
                                  std::span<const std::uint8_t> clean, GuestMachine& machine,
                                  ProtectionRegistry& protections, Ticks now);
StepEffect apply_code_tamper(const CodeTamper& script, GuestMachine& machine, ProtectionRegistry& protections,
                             Ticks now);
StepEffect apply_idt_tamper(const IdtTamper& script, GuestMachine& machine, ProtectionRegistry& protections,
                            Ticks now);
StepEffect apply_idtr_tamper(const IdtrTamper& script, GuestMachine& machine, Ticks now);

}  // namespace hfsim
