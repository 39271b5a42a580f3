#include "hfsim/integrity.hpp"

#include <algorithm>
#include <set>

#include "hfsim/errors.hpp"

namespace hfsim {

namespace {

class CheckAccumulator {
 public:
  CheckAccumulator(const GuestMachine& machine, const BaselineTable& table, Ticks now)
      : machine_(machine), table_(table), now_(now) {}

  void check(ObjectId id) {
    const auto& obj = machine_.object(id);
    auto bytes = machine_.view(obj.addr, obj.len);
    const Digest found = table_.digest(bytes);
    report_.checked.push_back(id);
    report_.bytes_hashed += obj.len;
    const std::size_t first = machine_.page_of(obj.addr);
    const std::size_t last = machine_.page_of(obj.addr + obj.len - 1);
    for (std::size_t p = first; p <= last; ++p) pages_.insert(p);
    if (found != table_.entries[id]) report_.violations.push_back({id, table_.entries[id], found, now_});
  }

  void check_idtr() {
    report_.idtr_checked = true;
    report_.idtr_violation = verify_idtr(machine_, table_, now_);
  }

  CheckReport finish(const CostModel& costs) && {
    report_.pages_touched = pages_.size();
    report_.duration = costs.hash_per_byte * static_cast<Ticks>(report_.bytes_hashed);
    return std::move(report_);
  }

 private:
  const GuestMachine& machine_;
  const BaselineTable& table_;
  Ticks now_;
  CheckReport report_;
  std::set<std::size_t> pages_;
};

}  // namespace

Digest compute_digest(std::span<const std::uint8_t> bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.finalize();
}

BaselineTable snapshot_baselines(const GuestMachine& machine, DigestFunction digest) {
  if (machine.objects().empty()) throw ConfigError("no kernel objects registered; nothing to baseline");
  BaselineTable table;
  table.digest = digest;
  table.idtr = machine.idtr();
  table.entries.reserve(machine.objects().size());
  for (const auto& obj : machine.objects()) table.entries.push_back(digest(machine.view(obj.addr, obj.len)));
  return table;
}

CheckReport check_batch(const GuestMachine& machine, BaselineTable& table, std::size_t k,
                        const CostModel& costs, Ticks now) {
  if (k == 0) throw ConfigError("batch size must be at least 1");
  const std::size_t n = table.size();
  if (n == 0) throw ConfigError("empty baseline table");
  CheckAccumulator acc(machine, table, now);
  table.cursor %= n;
  // A batch never straddles the end of the table, so every cycle is exactly ceil(n/k) calls.
  const std::size_t count = std::min(k, n - table.cursor);
  for (std::size_t i = 0; i < count; ++i) acc.check(static_cast<ObjectId>(table.cursor + i));
  table.cursor += count;
  if (table.cursor == n) {
    acc.check_idtr();
    table.cursor = 0;
  }
  return std::move(acc).finish(costs);
}

CheckReport check_all(const GuestMachine& machine, const BaselineTable& table, const CostModel& costs,
                      Ticks now) {
  if (table.size() == 0) throw ConfigError("empty baseline table");
  CheckAccumulator acc(machine, table, now);
  for (std::size_t id = 0; id < table.size(); ++id) acc.check(static_cast<ObjectId>(id));
  acc.check_idtr();
  return std::move(acc).finish(costs);
}

std::optional<IdtrViolation> verify_idtr(const GuestMachine& machine, const BaselineTable& table, Ticks now) {
  if (machine.idtr() == table.idtr) return std::nullopt;
  return IdtrViolation{table.idtr, machine.idtr(), now};
}

}  // namespace hfsim
