#include "hfsim/hypervisor.hpp"

#include <algorithm>

#include "hfsim/errors.hpp"

namespace hfsim {

std::string_view to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::Periodic: return "periodic";
    case ScheduleMode::PeriodicJittered: return "jittered";
    case ScheduleMode::GuestVisible: return "visible";
  }
  return "periodic";
}

FiringSchedule::FiringSchedule(ScheduleMode mode, Ticks period, Ticks jitter, std::uint64_t seed)
    : mode_(mode), period_(period), jitter_(jitter), seed_(seed), rng_(seed) {
  if (period <= 0) throw ConfigError("firing period must be positive");
  if (jitter < 0 || jitter >= period) throw ConfigError("jitter must satisfy 0 <= jitter < period");
}

FiringSchedule FiringSchedule::periodic(Ticks period) { return {ScheduleMode::Periodic, period, 0, 0}; }

FiringSchedule FiringSchedule::jittered(Ticks period, Ticks jitter, std::uint64_t seed) {
  return {ScheduleMode::PeriodicJittered, period, jitter, seed};
}

FiringSchedule FiringSchedule::guest_visible(Ticks period) { return {ScheduleMode::GuestVisible, period, 0, 0}; }

Ticks FiringSchedule::firing_time(std::size_t index) const {
  const Ticks nominal = period_ * static_cast<Ticks>(index);
  if (mode_ != ScheduleMode::PeriodicJittered || jitter_ == 0 || index == 0) return nominal;
  const auto span = static_cast<std::uint64_t>(2 * jitter_ + 1);
  while (offsets_.size() < index) {
    offsets_.push_back(static_cast<Ticks>(rng_() % span) - jitter_);
  }
  return nominal + offsets_[index - 1];
}

Ticks VirtualDevice::next_firing() { return schedule_.firing_time(next_index_++); }

std::optional<VisibleSchedule> VirtualDevice::guest_view() const {
  if (schedule_.mode() != ScheduleMode::GuestVisible) return std::nullopt;
  return VisibleSchedule{schedule_.period()};
}

VirtualDevice install_virtual_device(const GuestMachine& machine, std::uint32_t vector,
                                     const FiringSchedule& schedule) {
  const auto& module = machine.module();
  if (!module) throw ConfigError("virtual device needs a loaded monitoring module");
  if (module->handler_vector != vector) {
    throw ConfigError("device vector " + std::to_string(vector) + " does not match module handler vector " +
                      std::to_string(module->handler_vector));
  }
  return VirtualDevice(vector, schedule);
}

namespace {

PageRange pages_of(const GuestMachine& machine, Addr addr, std::size_t len) {
  if (len == 0) return {machine.page_of(addr), 0};
  const std::size_t first = machine.page_of(addr);
  const std::size_t last = machine.page_of(addr + len - 1);
  return {first, last - first + 1};
}

}  // namespace

void install_protections(const GuestMachine& machine, ProtectionRegistry& protections, Ticks now) {
  const auto& module = machine.module();
  if (!module) throw ConfigError("no monitoring module to protect");
  const Idtr idtr = machine.idtr();
  if (idtr.limit == 0) throw ConfigError("no IDT to protect");
  protections.label_region(module->addr, module->len, TrapKind::ModuleCodeWrite);
  protections.label_region(idtr.base, static_cast<std::size_t>(idtr.limit), TrapKind::IdtWrite);
  protections.protect_pages(pages_of(machine, module->addr, module->len), now);
  protections.protect_pages(pages_of(machine, idtr.base, static_cast<std::size_t>(idtr.limit)), now);
}

InterruptReport fire_interrupt(VirtualDevice& device, GuestMachine& machine, ProtectionRegistry& protections,
                               BaselineTable& baselines, const CostModel& costs, Ticks now, std::size_t batch) {
  const auto& module = machine.module();
  if (!module) throw StateError("interrupt fired without a loaded module");

  InterruptReport report;
  report.start = now;
  report.duration = costs.interrupt_delivery;

  const auto handler = machine.idt_entry(device.vector());
  if (!handler || !module->contains(*handler) || *handler >= module->data_addr) {
    report.subverted = true;
    report.subverted_handler = handler;
    return report;
  }

  const PageRange data_pages = pages_of(machine, module->data_addr, module->data_len());
  const bool relock = data_pages.count > 0 && protections.any_protected(data_pages.first, data_pages.end() - 1);
  if (relock) protections.unprotect_pages(data_pages, now);

  report.check = (batch == 0 || batch >= baselines.size()) ? check_all(machine, baselines, costs, now)
                                                           : check_batch(machine, baselines, batch, costs, now);
  report.handler_ran = true;
  report.duration += report.check.duration;

  if (module->data_len() >= 8) {
    // run counter in the handler's scratch page
    auto counter = machine.guest_read(module->data_addr, 8);
    std::uint64_t runs = 0;
    for (int i = 7; i >= 0; --i) runs = (runs << 8) | counter[static_cast<std::size_t>(i)];
    ++runs;
    for (std::size_t i = 0; i < 8; ++i) counter[i] = static_cast<std::uint8_t>(runs >> (8 * i));
    const auto outcome = machine.guest_write(protections, module->data_addr, counter, now);
    if (outcome.trapped()) throw StateError("module data page still locked inside the envelope");
  }

  if (relock) protections.protect_pages(data_pages, now + report.duration);
  return report;
}

VmexitReport on_control_register_write(const GuestMachine& machine, BaselineTable& baselines, std::size_t k,
                                       const CostModel& costs, Ticks now) {
  if (k == 0) throw ConfigError("batch size must be at least 1");
  VmexitReport report;
  report.start = now;
  report.check = check_batch(machine, baselines, k, costs, now + costs.vmexit);
  report.duration = costs.vmexit + costs.map_page * static_cast<Ticks>(report.check.pages_touched) +
                    report.check.duration + costs.vmentry;
  return report;
}

}  // namespace hfsim
