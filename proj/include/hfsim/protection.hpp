#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hfsim/time.hpp"

namespace hfsim {

using Addr = std::uint64_t;

struct PageRange {
  std::size_t first = 0;
  std::size_t count = 0;

  std::size_t end() const { return first + count; }
};

enum class TrapKind { ModuleCodeWrite, IdtWrite, OtherProtectedWrite };

std::string_view to_string(TrapKind kind);

struct TrapRecord {
  Ticks time = 0;
  Addr addr = 0;
  std::size_t len = 0;
  std::size_t page = 0;
  TrapKind kind = TrapKind::OtherProtectedWrite;

  bool operator==(const TrapRecord&) const = default;
};

// {"time":..,"addr":..,"len":..,"page":..,"kind":".."}
std::string to_json_line(const TrapRecord& rec);

struct ProtectionChange {
  Ticks time = 0;
  PageRange pages;
  bool protect = false;
};

// Hypervisor-side write-protection state for one guest. Page-granular; the
// trap log is append-only.
class ProtectionRegistry {
 public:
  explicit ProtectionRegistry(std::size_t page_count);

  // Idempotent. Throws AddressError for pages beyond the machine.
  void protect_pages(PageRange pages, Ticks now = 0);
  // Idempotent; pages that are absent (or beyond the machine) are ignored.
  void unprotect_pages(PageRange pages, Ticks now = 0);

  bool is_protected(std::size_t page) const;
  // True if any page in [first, last] is protected.
  bool any_protected(std::size_t first, std::size_t last) const;
  std::vector<std::size_t> protected_pages() const;
  std::size_t page_count() const { return protected_.size(); }

  // Regions used to classify trap records. The first matching label wins.
  void label_region(Addr addr, std::size_t len, TrapKind kind);
  TrapKind classify(Addr addr, std::size_t len) const;

  // Throws StateError if the log would go back in time or the page is not protected.
  void record_trap(const TrapRecord& rec);
  const std::vector<TrapRecord>& trap_log() const { return traps_; }
  const std::vector<ProtectionChange>& change_log() const { return changes_; }

  // Same protected set (logs are not compared).
  bool same_protection(const ProtectionRegistry& other) const { return protected_ == other.protected_; }

 private:
  struct Label {
    Addr addr;
    std::size_t len;
    TrapKind kind;
  };

  void check_range(PageRange pages) const;

  std::vector<bool> protected_;
  std::vector<TrapRecord> traps_;
  std::vector<ProtectionChange> changes_;
  std::vector<Label> labels_;
};

}  // namespace hfsim
