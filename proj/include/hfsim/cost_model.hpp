#pragma once

#include "hfsim/time.hpp"

namespace hfsim {

// Per-operation simulated costs. Workload base costs are part of native guest
// execution and are only used for per-event latency reporting; every other
// field is charged as a guest stall.
struct CostModel {
  Ticks vmexit = 0;
  Ticks vmentry = 0;
  Ticks interrupt_delivery = 0;
  Ticks map_page = 0;       // introspection remap per touched page (in-hypervisor checking only)
  Ticks hash_per_byte = 0;
  Ticks syscall_base = 0;
  Ticks ctxswitch_base = 0;

  bool operator==(const CostModel&) const = default;
};

}  // namespace hfsim
