#include "doctest.h"

#include <sstream>

#include "hfsim/errors.hpp"
#include "hfsim/simulation.hpp"
#include "json.hpp"

using namespace hfsim;

namespace {

constexpr Ticks kSec = kTicksPerSecond;
constexpr Ticks kUs = 1000;

MachineSetup setup(std::size_t objects = 200) {
  MachineSetup s;
  s.object_count = objects;
  s.page_count = required_pages(s);
  return s;
}

WorkloadSpec workload(Ticks horizon = 20 * kSec, double sys = 400, double ctx = 100) {
  return {sys, ctx, Arrival::Poisson, horizon};
}

CostModel costs() {
  CostModel c;
  c.vmexit = 2 * kUs;
  c.vmentry = kUs;
  c.interrupt_delivery = 5 * kUs;
  c.map_page = 20 * kUs;
  c.hash_per_byte = 50;
  c.syscall_base = kUs;
  c.ctxswitch_base = 5 * kUs;
  return c;
}

HfStrategy hf(Ticks period = 4 * kSec) { return {FiringSchedule::periodic(period), 0}; }

std::string dump(const ScenarioResult& r) { return to_json(r).dump(); }

}  // namespace

TEST_CASE("event queue order") {
  EventQueue q;
  q.push(4 * kSec, EventKind::Attack, 1);
  q.push(4 * kSec, EventKind::DeviceFiring);
  q.push(4 * kSec, EventKind::Workload, 7);
  q.push(4 * kSec, EventKind::Attack, 2);
  q.push(3 * kSec, EventKind::Workload, 9);
  q.push(4 * kSec, EventKind::Trap);
  std::vector<std::pair<EventKind, std::uint32_t>> got;
  Ticks last = 0;
  while (!q.empty()) {
    auto e = q.next_event();
    CHECK(e.time >= last);
    last = e.time;
    got.emplace_back(e.kind, e.a);
  }
  const std::vector<std::pair<EventKind, std::uint32_t>> expected{
      {EventKind::Workload, 9}, {EventKind::Trap, 0},   {EventKind::DeviceFiring, 0},
      {EventKind::Attack, 1},   {EventKind::Attack, 2}, {EventKind::Workload, 7}};
  CHECK(got == expected);
}

TEST_CASE("machine layout") {
  MachineSetup s = setup(100);
  GuestMachine m = build_machine(s);
  CHECK(m.idtr() == Idtr{0, kIdtVectors * kIdtEntrySize});
  REQUIRE(m.module());
  CHECK(m.module()->addr == 4096);
  CHECK(m.idt_entry(kMonitorVector) == Addr{4096});
  CHECK(m.object(0).addr == kFirstObjectPage * 4096);
  CHECK(m.object(1).addr == kFirstObjectPage * 4096 + 64);

  s.placement = Placement::Spread;
  s.page_count = required_pages(s);
  GuestMachine spread = build_machine(s);
  CHECK(spread.page_of(spread.object(1).addr) != spread.page_of(spread.object(0).addr));

  MachineSetup tight = setup(100);
  tight.page_count = required_pages(tight) - 1;
  CHECK_THROWS_AS(build_machine(tight), ConfigError);
}

TEST_CASE("baseline has no overhead") {
  auto r = run_scenario(setup(), BaselineStrategy{}, workload(), {}, costs(), 1);
  CHECK(r.overhead_fraction == 0.0);
  CHECK(r.total_time == r.horizon);
  CHECK(r.charged.total() == 0);
  CHECK(r.syscalls > 0);
  CHECK(r.accounting_holds());
}

TEST_CASE("zero-cost model gives zero overhead") {
  for (StrategyConfig s : {StrategyConfig{HrkStrategy{1}}, StrategyConfig{hf()}}) {
    auto r = run_scenario(setup(), s, workload(), {}, CostModel{}, 3);
    auto b = run_scenario(setup(), BaselineStrategy{}, workload(), {}, CostModel{}, 3);
    CHECK(overhead_report(r, b).total_pct == 0.0);
  }
}

TEST_CASE("determinism and conservation") {
  std::vector<AttackScript> attacks{PersistentTamper{5, 2 * kSec}, CodeTamper{3, 7 * kSec},
                                    IdtrTamper{4096, 9 * kSec}};
  for (StrategyConfig s : {StrategyConfig{HrkStrategy{2}}, StrategyConfig{hf()}, StrategyConfig{BaselineStrategy{}}}) {
    auto a = run_scenario(setup(), s, workload(), attacks, costs(), 42);
    auto b = run_scenario(setup(), s, workload(), attacks, costs(), 42);
    CHECK(dump(a) == dump(b));
    CHECK(a.accounting_holds());
    CHECK(a.total_time == a.horizon + a.charged.vmexit_checks + a.charged.interrupts + a.charged.traps);
    auto c = run_scenario(setup(), s, workload(), attacks, costs(), 43);
    CHECK(dump(a) != dump(c));
  }
}

TEST_CASE("fixed arrivals") {
  WorkloadSpec w{100, 0, Arrival::Fixed, 10 * kSec};
  auto r = run_scenario(setup(), BaselineStrategy{}, w, {}, costs(), 1);
  CHECK(r.syscalls == 999);  // 0.01 s apart, strictly before the horizon
  CHECK(r.ctxswitches == 0);
}

TEST_CASE("HRK charges one exit per event") {
  WorkloadSpec w{100, 50, Arrival::Fixed, 10 * kSec};
  auto r = run_scenario(setup(), HrkStrategy{1}, w, {}, costs(), 1);
  CHECK(r.vmexits == r.syscalls + r.ctxswitches);
  const Ticks per_exit = 2 * kUs + 20 * kUs + 50 * 64 + kUs;
  CHECK(r.charged.vmexit_checks == per_exit * static_cast<Ticks>(r.vmexits));
  CHECK(r.latency.syscall > static_cast<double>(per_exit));
}

TEST_CASE("HF charges one sweep per firing") {
  auto r = run_scenario(setup(), hf(), workload(), {}, costs(), 1);
  CHECK(r.interrupts == 5);  // 4, 8, 12, 16, 20 (the last one lands before the dilated end)
  CHECK(r.charged.interrupts == static_cast<Ticks>(r.interrupts) * (5 * kUs + 50 * 64 * 200));
  CHECK(r.max_handler_duration == 5 * kUs + 50 * 64 * 200);
}

TEST_CASE("HF has lower per-syscall latency than HRK") {
  auto base = run_scenario(setup(), BaselineStrategy{}, workload(), {}, costs(), 9);
  auto h = run_scenario(setup(), HrkStrategy{1}, workload(), {}, costs(), 9);
  auto f = run_scenario(setup(), hf(), workload(), {}, costs(), 9);
  CHECK(overhead_report(f, base).syscall_latency_pct < overhead_report(h, base).syscall_latency_pct);
}

TEST_CASE("overhead_report rejects mismatched runs") {
  auto a = run_scenario(setup(), BaselineStrategy{}, workload(), {}, costs(), 1);
  auto b = run_scenario(setup(), HrkStrategy{1}, workload(), {}, costs(), 2);
  auto c = run_scenario(setup(), HrkStrategy{1}, workload(10 * kSec), {}, costs(), 1);
  CHECK_THROWS_AS(overhead_report(b, a), ConfigError);
  CHECK_THROWS_AS(overhead_report(c, a), ConfigError);
}

TEST_CASE("monotonicity over a cost grid") {
  const CostModel base = costs();
  auto fields = std::vector<Ticks CostModel::*>{&CostModel::vmexit,         &CostModel::vmentry,
                                                &CostModel::interrupt_delivery, &CostModel::map_page,
                                                &CostModel::hash_per_byte,  &CostModel::syscall_base,
                                                &CostModel::ctxswitch_base};
  for (StrategyConfig s : {StrategyConfig{HrkStrategy{2}}, StrategyConfig{hf()}}) {
    for (auto field : fields) {
      double prev = -1.0;
      for (Ticks scale : {0, 1, 2, 5}) {
        CostModel c = base;
        c.*field = base.*field * scale;
        auto r = run_scenario(setup(), s, workload(10 * kSec), {}, c, 5);
        CHECK(r.overhead_fraction >= prev);
        prev = r.overhead_fraction;
      }
    }
  }
}

TEST_CASE("persistent tamper under HF") {
  std::vector<AttackScript> attacks{PersistentTamper{7, kSec}};
  auto r = run_scenario(setup(), hf(), workload(), attacks, costs(), 1);
  REQUIRE(r.attacks[0].detected_at);
  CHECK(*r.attacks[0].detected_at <= 5 * kSec + r.max_handler_duration);
  CHECK_FALSE(r.attacks[0].evaded);
  REQUIRE(r.detections.size() == 1);
  CHECK(r.detections[0].target == "object:7");
  CHECK(r.detections[0].tamper_time == kSec);
}

TEST_CASE("no-op mutation is never detected and not evaded") {
  std::vector<AttackScript> attacks{PersistentTamper{7, kSec, {0, 0x00}}};
  auto r = run_scenario(setup(), hf(), workload(), attacks, costs(), 1);
  CHECK(r.attacks[0].applied == 1);
  CHECK_FALSE(r.attacks[0].detected_at);
  CHECK_FALSE(r.attacks[0].evaded);
}

TEST_CASE("tamper beyond the horizon is not attempted") {
  std::vector<AttackScript> attacks{PersistentTamper{7, 50 * kSec}};
  auto r = run_scenario(setup(), hf(), workload(), attacks, costs(), 1);
  CHECK(r.attacks[0].attempted == 0);
}

TEST_CASE("IDTR moved to a faithful shadow table is caught by the IDTR check") {
  MachineSetup s = setup();
  s.page_count += 8;
  GuestMachine m = build_machine(s);
  const Addr shadow = (s.page_count - 1) * 4096;
  const auto idt = m.guest_read(0, kIdtVectors * kIdtEntrySize);
  m.write_privileged(shadow, idt);
  std::vector<AttackScript> attacks{IdtrTamper{shadow, kSec}};
  auto r = run_scenario(m, hf(), workload(), attacks, costs(), 1);
  REQUIRE(r.attacks[0].detected_at);
  CHECK(*r.attacks[0].detected_at <= 4 * kSec + r.max_handler_duration);
  CHECK(r.idtr_violations >= 1);
  CHECK(r.subversions == 0);
}

TEST_CASE("IDTR moved to an empty table subverts the handler and is detected") {
  std::vector<AttackScript> attacks{IdtrTamper{8 * 4096, kSec}};
  MachineSetup s = setup();
  s.page_count += 8;
  auto r = run_scenario(s, hf(), workload(), attacks, costs(), 1);
  REQUIRE(r.attacks[0].detected_at);
  CHECK(*r.attacks[0].detected_at <= 4 * kSec + r.max_handler_duration);
  CHECK(r.subversions >= 1);
}

TEST_CASE("IDTR tamper caught by HRK on cycle wrap") {
  std::vector<AttackScript> attacks{IdtrTamper{8 * 4096, kSec}};
  MachineSetup s = setup();
  s.page_count += 8;
  auto r = run_scenario(s, HrkStrategy{4}, workload(), attacks, costs(), 1);
  CHECK(r.attacks[0].detected_at);
}

TEST_CASE("code tamper at the envelope instant is still trapped") {
  std::vector<AttackScript> attacks{CodeTamper{0, 4 * kSec}, CodeTamper{4096 + 8, 4 * kSec},
                                    IdtTamper{kMonitorVector, 0x9000, 8 * kSec}};
  auto r = run_scenario(setup(), hf(), workload(), attacks, costs(), 1);
  for (const auto& a : r.attacks) {
    CHECK(a.attempted == 1);
    CHECK(a.trapped == 1);
    CHECK(a.applied == 0);
    CHECK(a.detected_at);
  }
  CHECK(r.traps.size() == 3);
  CHECK(r.charged.traps == 3 * (costs().vmexit + costs().vmentry));
  CHECK(r.subversions == 0);
}

TEST_CASE("write one byte past the module lands") {
  MachineSetup s = setup();
  GuestMachine m = build_machine(s);
  const std::size_t past = m.module()->len;
  std::vector<AttackScript> attacks{CodeTamper{past, 2 * kSec}};
  auto r = run_scenario(s, hf(), workload(), attacks, costs(), 1);
  CHECK(r.attacks[0].applied == 1);
  CHECK(r.traps.empty());
}

TEST_CASE("envelope safety from the trace") {
  std::vector<AttackScript> attacks{CodeTamper{0, 4 * kSec}, PersistentTamper{3, 6 * kSec},
                                    TransientTamper{4, {{7 * kSec, 8 * kSec + 1}}}};
  std::ostringstream trace;
  RunOptions opts{&trace};
  auto r = run_scenario(setup(), hf(), workload(), attacks, costs(), 4, opts);
  std::istringstream in(trace.str());
  std::string line;
  bool unlocked = false;
  Ticks unlocked_at = 0, locked_at = 0;
  std::size_t envelopes = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    const std::string ev = j["event"];
    const Ticks t = j["t"];
    if (ev == "unlock") {
      CHECK_FALSE(unlocked);
      unlocked = true;
      unlocked_at = t;
    } else if (ev == "lock") {
      CHECK(unlocked);
      unlocked = false;
      locked_at = t;
      ++envelopes;
    } else if (ev == "firing") {
      CHECK(unlocked);
      CHECK(t == unlocked_at);
    } else {
      // no guest event inside an envelope
      CHECK_FALSE(unlocked);
      if (envelopes > 0 && ev != "end") CHECK(t >= locked_at);
    }
  }
  CHECK(envelopes == r.interrupts);
}

TEST_CASE("HF configuration errors before time starts") {
  // sweep longer than the period
  CostModel c = costs();
  c.hash_per_byte = kSec;
  CHECK_THROWS_AS(run_scenario(setup(), hf(), workload(), {}, c, 1), ConfigError);
  WorkloadSpec bad = workload();
  bad.horizon = 0;
  CHECK_THROWS_AS(run_scenario(setup(), hf(), bad, {}, costs(), 1), ConfigError);
  CHECK_THROWS_AS(run_scenario(setup(), HrkStrategy{0}, workload(), {}, costs(), 1), ConfigError);
  std::vector<AttackScript> attacks{PersistentTamper{9999, kSec}};
  CHECK_THROWS_AS(run_scenario(setup(), hf(), workload(), attacks, costs(), 1), ConfigError);

  GuestMachine bare(8);
  bare.set_idtr({0, 2048}, Privilege::Hypervisor);
  bare.register_kernel_object("x", 4096, 8);
  CHECK_THROWS_AS(run_scenario(bare, hf(), workload(), {}, costs(), 1), ConfigError);
}

TEST_CASE("HRK detection bound holds for every tamper") {
  const std::size_t n = 200, k = 2;
  std::vector<AttackScript> attacks;
  for (int i = 0; i < 40; ++i) attacks.push_back(PersistentTamper{static_cast<ObjectId>(i * 7 % n), kSec + i * kSec / 4});
  WorkloadSpec w{300, 100, Arrival::Fixed, 20 * kSec};
  auto r = run_scenario(setup(n), HrkStrategy{k}, w, attacks, costs(), 1);
  // fixed arrivals: one exit every 1/400 s at least (dilated by the charges)
  const double exits_per_sec = 400.0;
  const double bound = std::ceil(double(n) / k) / exits_per_sec * (1.0 + r.overhead_fraction) * kSec +
                       double(r.max_handler_duration) + kSec / 100.0;
  REQUIRE(r.detections.size() == 40);
  for (const auto& d : r.detections) CHECK(double(d.latency()) <= bound);
}
