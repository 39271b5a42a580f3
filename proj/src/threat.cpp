#include "hfsim/threat.hpp"

#include <algorithm>

#include "hfsim/errors.hpp"

namespace hfsim {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_object(const GuestMachine& machine, ObjectId id, const ByteFlip& flip) {
  if (id >= machine.objects().size()) throw ConfigError("attack targets unknown object " + std::to_string(id));
  if (flip.offset >= machine.object(id).len) {
    throw ConfigError("mutation offset " + std::to_string(flip.offset) + " outside object " + std::to_string(id));
  }
}

}  // namespace

std::string_view kind_name(const AttackScript& script) {
  return std::visit(Overloaded{
                        [](const PersistentTamper&) { return std::string_view("persistent"); },
                        [](const TransientTamper&) { return std::string_view("transient"); },
                        [](const CodeTamper&) { return std::string_view("code"); },
                        [](const IdtTamper&) { return std::string_view("idt"); },
                        [](const IdtrTamper&) { return std::string_view("idtr"); },
                    },
                    script);
}

Ticks first_action_time(const AttackScript& script) {
  return std::visit(Overloaded{
                        [](const TransientTamper& t) {
                          return t.dirty_windows.empty() ? Ticks{0} : t.dirty_windows.front().start;
                        },
                        [](const auto& s) { return s.at; },
                    },
                    script);
}

void validate_attack(const AttackScript& script, const GuestMachine& machine) {
  std::visit(Overloaded{
                 [&](const PersistentTamper& s) {
                   if (s.at < 0) throw ConfigError("attack time must be >= 0");
                   check_object(machine, s.object, s.mutation);
                 },
                 [&](const TransientTamper& s) {
                   check_object(machine, s.object, s.mutation);
                   if (s.dirty_windows.empty()) throw ConfigError("transient tamper needs at least one window");
                   Ticks prev_end = 0;
                   for (const auto& w : s.dirty_windows) {
                     if (w.start < prev_end || w.end <= w.start) {
                       throw ConfigError("dirty windows must be non-empty, ordered and non-overlapping");
                     }
                     prev_end = w.end;
                   }
                 },
                 [&](const CodeTamper& s) {
                   if (s.at < 0) throw ConfigError("attack time must be >= 0");
                   if (!machine.module()) throw ConfigError("code tamper needs a loaded module");
                   if (machine.module()->addr + s.offset >= machine.memory_size()) {
                     throw ConfigError("code tamper offset beyond memory");
                   }
                 },
                 [&](const IdtTamper& s) {
                   if (s.at < 0) throw ConfigError("attack time must be >= 0");
                   if (s.vector >= machine.idtr().vector_count()) {
                     throw ConfigError("IDT tamper vector " + std::to_string(s.vector) + " beyond IDT limit");
                   }
                 },
                 [&](const IdtrTamper& s) {
                   if (s.at < 0) throw ConfigError("attack time must be >= 0");
                   const auto limit = machine.idtr().limit;
                   if (s.new_base > machine.memory_size() || limit > machine.memory_size() - s.new_base) {
                     throw ConfigError("IDTR tamper base places the table outside memory");
                   }
                 },
             },
             script);
}

std::vector<AttackStep> plan_attack(const AttackScript& script, Ticks horizon,
                                    const std::optional<VisibleSchedule>& visible) {
  std::vector<AttackStep> steps;
  if (const auto* t = std::get_if<TransientTamper>(&script)) {
    const bool evade = t->knowledge == ScheduleKnowledge::GuestVisibleOnly && visible && visible->period > 0;
    for (const auto& w : t->dirty_windows) {
      Ticks start = w.start;
      if (evade) {
        // A firing at f samples state dirtied at any time < f and restored at any time >= f.
        auto i = static_cast<std::size_t>(start / visible->period) + 1;
        for (Ticks f = visible->firing_time(i); f <= w.end; f = visible->firing_time(++i)) {
          if (f - 1 > start) {
            steps.push_back({start, StepAction::Dirty});
            steps.push_back({f - 1, StepAction::Restore});
          }
          start = f;
        }
      }
      if (w.end > start) {
        steps.push_back({start, StepAction::Dirty});
        steps.push_back({w.end, StepAction::Restore});
      }
    }
  } else {
    steps.push_back({first_action_time(script), StepAction::Apply});
  }
  std::erase_if(steps, [&](const AttackStep& s) { return s.at > horizon; });
  return steps;
}

StepEffect apply_persistent_tamper(const PersistentTamper& script, GuestMachine& machine,
                                   ProtectionRegistry& protections, Ticks now) {
  const auto& obj = machine.object(script.object);
  const Addr addr = obj.addr + script.mutation.offset;
  const std::uint8_t value = machine.guest_read(addr, 1)[0] ^ script.mutation.xor_mask;
  return {true, machine.guest_write(protections, addr, std::span(&value, 1), now)};
}

StepEffect apply_transient_tamper(const TransientTamper& script, StepAction action,
                                  std::span<const std::uint8_t> clean, GuestMachine& machine,
                                  ProtectionRegistry& protections, Ticks now) {
  const auto& obj = machine.object(script.object);
  if (action == StepAction::Restore) {
    // Perfect mimicry: write back the trusted bytes.
    return {false, machine.guest_write(protections, obj.addr, clean, now)};
  }
  const Addr addr = obj.addr + script.mutation.offset;
  const std::uint8_t value = clean[script.mutation.offset] ^ script.mutation.xor_mask;
  return {true, machine.guest_write(protections, addr, std::span(&value, 1), now)};
}

StepEffect apply_code_tamper(const CodeTamper& script, GuestMachine& machine, ProtectionRegistry& protections,
                             Ticks now) {
  const Addr addr = machine.module()->addr + script.offset;
  return {true, machine.guest_write(protections, addr, std::span(&script.value, 1), now)};
}

StepEffect apply_idt_tamper(const IdtTamper& script, GuestMachine& machine, ProtectionRegistry& protections,
                            Ticks now) {
  return {true, machine.set_idt_entry(protections, script.vector, script.new_handler, now)};
}

StepEffect apply_idtr_tamper(const IdtrTamper& script, GuestMachine& machine, Ticks) {
  Idtr next = machine.idtr();
  next.base = script.new_base;
  machine.set_idtr(next, Privilege::Guest);
  return {true, {}};
}

}  // namespace hfsim
