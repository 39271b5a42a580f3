#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hfsim/protection.hpp"
#include "hfsim/time.hpp"

namespace hfsim {

using ObjectId = std::uint32_t;

inline constexpr std::size_t kIdtEntrySize = 8;

struct Idtr {
  Addr base = 0;
  std::uint64_t limit = 0;  // byte length of the table; 0 means unset

  bool operator==(const Idtr&) const = default;
  std::size_t vector_count() const { return static_cast<std::size_t>(limit / kIdtEntrySize); }
};

struct KernelObjectDescriptor {
  ObjectId id = 0;
  std::string name;
  Addr addr = 0;
  std::size_t len = 0;
};

// Code and data of the in-guest checker. [addr, data_addr) is code,
// [data_addr, addr + len) is the handler's writable scratch data.
struct ModuleRegion {
  Addr addr = 0;
  std::size_t len = 0;
  std::uint32_t handler_vector = 0;
  Addr data_addr = 0;

  Addr end() const { return addr + len; }
  bool contains(Addr a) const { return a >= addr && a < end(); }
  std::size_t data_len() const { return static_cast<std::size_t>(end() - data_addr); }
};

struct Page {
  std::size_t index = 0;
  std::span<const std::uint8_t> bytes;
};

struct WriteOutcome {
  enum class Variant { Applied, Trapped };

  Variant variant = Variant::Applied;
  std::optional<TrapRecord> trap;

  bool applied() const { return variant == Variant::Applied; }
  bool trapped() const { return variant == Variant::Trapped; }
};

enum class Privilege { Guest, Hypervisor };

// Simulated guest physical memory plus the interrupt table state and the
// registered invariant objects. Guest-initiated writes go through a
// ProtectionRegistry which may veto them; a vetoed write leaves memory
// untouched, including the pages of the range that were not protected.
class GuestMachine {
 public:
  // page_size must be a power of two >= 64; page_count >= 1.
  GuestMachine(std::size_t page_count, std::size_t page_size = 4096);

  std::size_t page_count() const { return page_count_; }
  std::size_t page_size() const { return page_size_; }
  std::size_t memory_size() const { return memory_.size(); }
  Page page(std::size_t index) const;
  std::size_t page_of(Addr addr) const { return static_cast<std::size_t>(addr / page_size_); }

  WriteOutcome guest_write(ProtectionRegistry& protections, Addr addr,
                           std::span<const std::uint8_t> bytes, Ticks now = 0);
  // Bypasses protection; used by setup code and the hypervisor itself.
  void write_privileged(Addr addr, std::span<const std::uint8_t> bytes);

  std::vector<std::uint8_t> guest_read(Addr addr, std::size_t len) const;
  std::span<const std::uint8_t> view(Addr addr, std::size_t len) const;

  ModuleRegion load_module(std::span<const std::uint8_t> code, Addr addr,
                           std::uint32_t handler_vector, std::size_t data_len = 0);
  const std::optional<ModuleRegion>& module() const { return module_; }

  ObjectId register_kernel_object(std::string name, Addr addr, std::size_t len);
  const std::vector<KernelObjectDescriptor>& objects() const { return objects_; }
  const KernelObjectDescriptor& object(ObjectId id) const;

  WriteOutcome set_idt_entry(ProtectionRegistry& protections, std::uint32_t vector,
                             Addr handler, Ticks now = 0);
  void set_idt_entry_privileged(std::uint32_t vector, Addr handler);
  // Handler address through the current IDTR; nullopt if the vector is beyond the limit.
  std::optional<Addr> idt_entry(std::uint32_t vector) const;

  // Guest-initiated IDTR loads are not trapped; they are caught by the
  // IDTR integrity check.
  void set_idtr(Idtr idtr, Privilege privilege = Privilege::Guest);
  const Idtr& idtr() const { return idtr_; }

  const std::vector<std::uint8_t>& snapshot() const { return memory_; }
  // Raw page-indexed dump of memory.
  void export_snapshot(std::ostream& out) const;

  bool operator==(const GuestMachine& other) const;

 private:
  void check_range(Addr addr, std::size_t len) const;

  std::size_t page_count_;
  std::size_t page_size_;
  std::vector<std::uint8_t> memory_;
  Idtr idtr_;
  std::vector<KernelObjectDescriptor> objects_;
  std::optional<ModuleRegion> module_;
};

}  // namespace hfsim
