#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hfsim/cost_model.hpp"
#include "hfsim/guest_machine.hpp"
#include "hfsim/time.hpp"

namespace hfsim {

struct Digest {
  std::uint64_t value = 0;

  auto operator<=>(const Digest&) const = default;
};

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

// Incremental FNV-1a, 64-bit.
class Fnv1a64 {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) {
      hash_ ^= b;
      hash_ *= kFnvPrime;
    }
  }
  Digest finalize() const { return {hash_}; }

 private:
  std::uint64_t hash_ = kFnvOffsetBasis;
};

Digest compute_digest(std::span<const std::uint8_t> bytes);

// Any deterministic function of the bytes can stand in for FNV-1a.
using DigestFunction = Digest (*)(std::span<const std::uint8_t>);

struct BaselineTable {
  std::vector<Digest> entries;  // indexed by ObjectId
  Idtr idtr;
  std::size_t cursor = 0;
  DigestFunction digest = &compute_digest;

  std::size_t size() const { return entries.size(); }
};

struct Violation {
  ObjectId object_id = 0;
  Digest expected;
  Digest found;
  Ticks time = 0;

  bool operator==(const Violation&) const = default;
};

struct IdtrViolation {
  Idtr expected;
  Idtr found;
  Ticks time = 0;
};

struct CheckReport {
  std::vector<ObjectId> checked;
  std::vector<Violation> violations;
  std::optional<IdtrViolation> idtr_violation;
  bool idtr_checked = false;
  std::size_t bytes_hashed = 0;
  std::size_t pages_touched = 0;  // distinct guest pages read by the check
  Ticks duration = 0;             // hashing cost only; callers add transition costs

  bool clean() const { return violations.empty() && !idtr_violation; }
};

// Throws ConfigError if no objects are registered.
BaselineTable snapshot_baselines(const GuestMachine& machine, DigestFunction digest = &compute_digest);

// Next k objects from the cursor, stopping at the end of the table; advances the cursor.
// The IDTR is verified whenever the batch completes a pass over the table.
CheckReport check_batch(const GuestMachine& machine, BaselineTable& table, std::size_t k,
                        const CostModel& costs, Ticks now = 0);

// Every object once plus the IDTR; cursor untouched.
CheckReport check_all(const GuestMachine& machine, const BaselineTable& table, const CostModel& costs,
                      Ticks now = 0);

std::optional<IdtrViolation> verify_idtr(const GuestMachine& machine, const BaselineTable& table,
                                         Ticks now = 0);

}  // namespace hfsim
