#include "hfsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "hfsim/errors.hpp"
#include "hfsim/integrity.hpp"

namespace hfsim {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// One arrival stream in guest-native time.
class ArrivalStream {
 public:
  ArrivalStream(double rate, Arrival arrival, std::uint64_t seed) : rate_(rate), arrival_(arrival), rng_(seed) {
    if (rate_ > 0 && arrival_ == Arrival::Fixed) {
      interval_ = std::max<Ticks>(1, static_cast<Ticks>(std::llround(1e9 / rate_)));
    }
  }

  bool active() const { return rate_ > 0; }

  Ticks next() {
    if (arrival_ == Arrival::Fixed) {
      last_ += interval_;
    } else {
      // (0, 1) from the top 53 bits
      const double u = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
      last_ += std::max<Ticks>(1, static_cast<Ticks>(std::llround(-std::log(u) / rate_ * 1e9)));
    }
    return last_;
  }

 private:
  double rate_;
  Arrival arrival_;
  std::mt19937_64 rng_;
  Ticks interval_ = 0;
  Ticks last_ = 0;
};

enum : std::uint32_t { kSyscall = 0, kCtxSwitch = 1, kWorkloadEnd = 2 };

struct AttackTracker {
  const AttackScript* script = nullptr;
  std::vector<AttackStep> steps;
  Addr addr = 0;  // watched range for dirtiness
  std::size_t len = 0;
  std::vector<std::uint8_t> clean;
  bool watches_idtr = false;
  Idtr clean_idtr;
  bool dirty = false;
  Ticks dirty_since = 0;
  bool ever_dirty = false;
  std::string target;
  AttackOutcome outcome;
};

class Simulator {
 public:
  Simulator(GuestMachine machine, const StrategyConfig& strategy, const WorkloadSpec& workload,
            std::span<const AttackScript> attacks, const CostModel& costs, std::uint64_t seed,
            const RunOptions& options)
      : machine_(std::move(machine)),
        protections_(machine_.page_count()),
        strategy_(strategy),
        workload_(workload),
        costs_(costs),
        seed_(seed),
        trace_(options.trace),
        syscalls_(workload.syscall_rate, workload.arrival, splitmix64(seed ^ 0x5157ull)),
        ctxswitches_(workload.ctxswitch_rate, workload.arrival, splitmix64(seed ^ 0xc7c5ull)) {
    validate(attacks);
    baselines_ = snapshot_baselines(machine_);
    if (const auto* hf = std::get_if<HfStrategy>(&strategy_)) {
      install_protections(machine_, protections_, 0);
      device_.emplace(install_virtual_device(machine_, kMonitorVector, hf->schedule));
      hf_batch_ = hf->batch;
      check_envelope_fits(*hf);
    } else if (const auto* hrk = std::get_if<HrkStrategy>(&strategy_)) {
      hrk_k_ = hrk->batch_k;
    }
    setup_attacks(attacks);
  }

  ScenarioResult run() {
    if (syscalls_.active()) push_workload(kSyscall, syscalls_.next());
    if (ctxswitches_.active()) push_workload(kCtxSwitch, ctxswitches_.next());
    push_workload(kWorkloadEnd, workload_.horizon);
    if (device_) queue_.push(device_->next_firing(), EventKind::DeviceFiring);
    for (std::uint32_t i = 0; i < trackers_.size(); ++i) {
      for (std::uint32_t s = 0; s < trackers_[i].steps.size(); ++s) {
        queue_.push(trackers_[i].steps[s].at, EventKind::Attack, i, s);
      }
    }

    while (!queue_.empty()) {
      const Event e = queue_.next_event();
      if (e.kind == EventKind::Workload) {
        const Ticks wall = e.native + charged_.total();
        if (wall != e.time) {
          // stalls happened since this arrival was queued
          queue_.push(wall, EventKind::Workload, e.a, e.b, e.native);
          continue;
        }
      }
      now_ = std::max(now_, e.time);
      if (e.kind == EventKind::Workload && e.a == kWorkloadEnd) {
        trace({{"t", now_}, {"event", "end"}});
        break;
      }
      dispatch(e);
    }
    return finish();
  }

 private:
  void validate(std::span<const AttackScript> attacks) {
    if (workload_.horizon <= 0) throw ConfigError("workload horizon must be positive");
    if (workload_.syscall_rate < 0 || workload_.ctxswitch_rate < 0 || !std::isfinite(workload_.syscall_rate) ||
        !std::isfinite(workload_.ctxswitch_rate)) {
      throw ConfigError("workload rates must be finite and >= 0");
    }
    for (Ticks c : {costs_.vmexit, costs_.vmentry, costs_.interrupt_delivery, costs_.map_page, costs_.hash_per_byte,
                    costs_.syscall_base, costs_.ctxswitch_base}) {
      if (c < 0) throw ConfigError("cost model fields must be >= 0");
    }
    if (const auto* hrk = std::get_if<HrkStrategy>(&strategy_); hrk && hrk->batch_k == 0) {
      throw ConfigError("batch_k must be at least 1");
    }
    for (const auto& a : attacks) validate_attack(a, machine_);
  }

  void check_envelope_fits(const HfStrategy& hf) {
    std::size_t bytes = 0;
    const std::size_t n = machine_.objects().size();
    const std::size_t per_interrupt = (hf.batch == 0 || hf.batch >= n) ? n : hf.batch;
    std::vector<std::size_t> lens;
    for (const auto& o : machine_.objects()) lens.push_back(o.len);
    std::sort(lens.rbegin(), lens.rend());
    for (std::size_t i = 0; i < per_interrupt; ++i) bytes += lens[i];
    const Ticks worst = costs_.interrupt_delivery + costs_.hash_per_byte * static_cast<Ticks>(bytes);
    const Ticks min_gap = hf.schedule.period() - 2 * hf.schedule.jitter();
    if (worst >= std::max<Ticks>(min_gap, 1)) {
      throw ConfigError("interrupt handler (" + format_seconds(worst) +
                        " s) does not fit between device firings; the guest would never progress");
    }
  }

  void setup_attacks(std::span<const AttackScript> attacks) {
    std::optional<VisibleSchedule> visible;
    if (device_) visible = device_->guest_view();
    trackers_.reserve(attacks.size());
    for (const auto& script : attacks) {
      AttackTracker t;
      t.script = &script;
      t.steps = plan_attack(script, workload_.horizon, visible);
      std::visit(Overloaded{
                     [&](const PersistentTamper& s) { watch_object(t, s.object); },
                     [&](const TransientTamper& s) { watch_object(t, s.object); },
                     [&](const CodeTamper& s) {
                       t.addr = machine_.module()->addr + s.offset;
                       t.len = 1;
                       t.target = "module+" + std::to_string(s.offset);
                     },
                     [&](const IdtTamper& s) {
                       t.addr = machine_.idtr().base + kIdtEntrySize * s.vector;
                       t.len = kIdtEntrySize;
                       t.target = "idt:" + std::to_string(s.vector);
                     },
                     [&](const IdtrTamper&) {
                       t.watches_idtr = true;
                       t.clean_idtr = machine_.idtr();
                       t.target = "idtr";
                     },
                 },
                 script);
      if (!t.watches_idtr) {
        auto bytes = machine_.view(t.addr, t.len);
        t.clean.assign(bytes.begin(), bytes.end());
      }
      trackers_.push_back(std::move(t));
    }
    detected_episode_.assign(trackers_.size(), -1);
  }

  void watch_object(AttackTracker& t, ObjectId id) {
    const auto& obj = machine_.object(id);
    t.addr = obj.addr;
    t.len = obj.len;
    t.target = "object:" + std::to_string(id);
  }

  void push_workload(std::uint32_t stream, Ticks native) {
    if (stream != kWorkloadEnd && native >= workload_.horizon) return;
    queue_.push(native + charged_.total(), EventKind::Workload, stream, 0, native);
  }

  void charge(Ticks& bucket, Ticks amount) {
    bucket += amount;
    now_ += amount;
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::Trap: on_trap(e); break;
      case EventKind::DeviceFiring: on_firing(); break;
      case EventKind::Attack: on_attack(e); break;
      case EventKind::Workload: on_workload(e); break;
    }
  }

  void on_workload(const Event& e) {
    const bool is_syscall = e.a == kSyscall;
    (is_syscall ? syscalls_seen_ : ctxswitches_seen_)++;
    Ticks cost = 0;
    if (hrk_k_ > 0) {
      // every syscall and context switch reloads CR3
      const Ticks start = now_;
      auto report = on_control_register_write(machine_, baselines_, hrk_k_, costs_, start);
      cost = report.duration;
      ++vmexits_;
      charge(charged_.vmexit_checks, cost);
      (is_syscall ? direct_syscall_ : direct_ctxswitch_) += cost;
      max_handler_ = std::max(max_handler_, cost);
      attribute(report.check, false, now_);
    }
    trace({{"t", e.time}, {"event", is_syscall ? "syscall" : "ctxswitch"}, {"charge", cost}});
    push_workload(e.a, (is_syscall ? syscalls_ : ctxswitches_).next());
  }

  void on_firing() {
    const Ticks start = now_;
    if (trace_) trace({{"t", start}, {"event", "unlock"}});
    auto report = fire_interrupt(*device_, machine_, protections_, baselines_, costs_, start, hf_batch_);
    ++interrupts_;
    charge(charged_.interrupts, report.duration);
    max_handler_ = std::max(max_handler_, report.duration);
    if (report.subverted) ++subversions_;
    attribute(report.check, report.subverted, now_);
    trace({{"t", start},
           {"event", "firing"},
           {"charge", report.duration},
           {"violations", report.check.violations.size()},
           {"subverted", report.subverted}});
    if (trace_) trace({{"t", now_}, {"event", "lock"}});
    queue_.push(device_->next_firing(), EventKind::DeviceFiring);
  }

  void on_attack(const Event& e) {
    AttackTracker& t = trackers_[e.a];
    const AttackStep& step = t.steps[e.b];
    StepEffect effect = std::visit(
        Overloaded{
            [&](const PersistentTamper& s) { return apply_persistent_tamper(s, machine_, protections_, now_); },
            [&](const TransientTamper& s) {
              return apply_transient_tamper(s, step.action, t.clean, machine_, protections_, now_);
            },
            [&](const CodeTamper& s) { return apply_code_tamper(s, machine_, protections_, now_); },
            [&](const IdtTamper& s) { return apply_idt_tamper(s, machine_, protections_, now_); },
            [&](const IdtrTamper& s) { return apply_idtr_tamper(s, machine_, now_); },
        },
        *t.script);
    if (effect.attempted) {
      ++t.outcome.attempted;
      if (effect.outcome.trapped()) {
        ++t.outcome.trapped;
      } else {
        ++t.outcome.applied;
      }
    }
    if (effect.outcome.trapped()) {
      if (!t.outcome.detected_at) t.outcome.detected_at = now_;
      queue_.push(now_, EventKind::Trap, e.a, static_cast<std::uint32_t>(protections_.trap_log().size() - 1));
    }
    refresh_dirty(t);
    trace({{"t", now_},
           {"event", "attack"},
           {"attack", e.a},
           {"kind", kind_name(*t.script)},
           {"action", step.action == StepAction::Restore ? "restore" : "write"},
           {"trapped", effect.outcome.trapped()},
           {"dirty", t.dirty}});
  }

  void on_trap(const Event& e) {
    const Ticks cost = costs_.vmexit + costs_.vmentry;
    const Ticks start = now_;
    charge(charged_.traps, cost);
    const auto& rec = protections_.trap_log().at(e.b);
    trace({{"t", start}, {"event", "trap"}, {"attack", e.a}, {"page", rec.page}, {"kind", to_string(rec.kind)},
           {"charge", cost}});
  }

  void refresh_dirty(AttackTracker& t) {
    bool dirty = false;
    if (t.watches_idtr) {
      dirty = machine_.idtr() != t.clean_idtr;
    } else {
      auto bytes = machine_.view(t.addr, t.len);
      dirty = !std::equal(bytes.begin(), bytes.end(), t.clean.begin(), t.clean.end());
    }
    if (dirty && !t.dirty) t.dirty_since = now_;
    t.dirty = dirty;
    t.ever_dirty = t.ever_dirty || dirty;
  }

  void detect(std::size_t index, Ticks when) {
    AttackTracker& t = trackers_[index];
    if (!t.dirty) return;
    const bool first = !t.outcome.detected_at;
    if (first) t.outcome.detected_at = when;
    // one record per dirty episode
    if (first || detected_episode_.at(index) != t.dirty_since) {
      detections_.push_back({index, t.target, t.dirty_since, when});
      detected_episode_[index] = t.dirty_since;
    }
  }

  void attribute(const CheckReport& check, bool subverted, Ticks when) {
    object_violations_ += check.violations.size();
    if (check.idtr_violation) ++idtr_violations_;
    if (check.clean() && !subverted) return;
    for (std::size_t i = 0; i < trackers_.size(); ++i) {
      const auto& t = trackers_[i];
      if (!t.dirty) continue;
      bool hit = false;
      if (const auto* p = std::get_if<PersistentTamper>(t.script)) {
        hit = has_violation(check, p->object);
      } else if (const auto* tr = std::get_if<TransientTamper>(t.script)) {
        hit = has_violation(check, tr->object);
      } else if (std::holds_alternative<IdtrTamper>(*t.script)) {
        hit = check.idtr_violation.has_value() || subverted;
      } else if (std::holds_alternative<IdtTamper>(*t.script)) {
        hit = subverted;
      }
      if (hit) detect(i, when);
    }
  }

  static bool has_violation(const CheckReport& check, ObjectId id) {
    return std::any_of(check.violations.begin(), check.violations.end(),
                       [id](const Violation& v) { return v.object_id == id; });
  }

  void trace(const nlohmann::json& line) {
    if (trace_) *trace_ << line.dump() << '\n';
  }

  ScenarioResult finish() {
    ScenarioResult r;
    r.strategy = strategy_name(strategy_);
    r.seed = seed_;
    r.horizon = workload_.horizon;
    r.total_time = now_;
    r.charged = charged_;
    r.overhead_fraction = static_cast<double>(now_ - workload_.horizon) / static_cast<double>(workload_.horizon);
    r.syscalls = syscalls_seen_;
    r.ctxswitches = ctxswitches_seen_;
    r.vmexits = vmexits_;
    r.interrupts = interrupts_;
    r.subversions = subversions_;
    r.object_violations = object_violations_;
    r.idtr_violations = idtr_violations_;
    r.max_handler_duration = max_handler_;

    // Stalls not tied to a specific event dilate every event evenly.
    const Ticks background = charged_.total() - direct_syscall_ - direct_ctxswitch_;
    const double dilation = static_cast<double>(background) / static_cast<double>(workload_.horizon);
    auto mean_latency = [&](Ticks base, Ticks direct, std::size_t count) {
      const double direct_mean = count ? static_cast<double>(direct) / static_cast<double>(count) : 0.0;
      return static_cast<double>(base) * (1.0 + dilation) + direct_mean;
    };
    r.latency.syscall = mean_latency(costs_.syscall_base, direct_syscall_, syscalls_seen_);
    r.latency.ctxswitch = mean_latency(costs_.ctxswitch_base, direct_ctxswitch_, ctxswitches_seen_);

    r.detections = std::move(detections_);
    r.traps = protections_.trap_log();
    for (auto& t : trackers_) {
      t.outcome.evaded = t.ever_dirty && !t.outcome.detected_at;
      r.attacks.push_back(t.outcome);
    }
    return r;
  }

  GuestMachine machine_;
  ProtectionRegistry protections_;
  StrategyConfig strategy_;
  WorkloadSpec workload_;
  CostModel costs_;
  std::uint64_t seed_;
  std::ostream* trace_;

  BaselineTable baselines_;
  std::optional<VirtualDevice> device_;
  std::size_t hf_batch_ = 0;
  std::size_t hrk_k_ = 0;

  ArrivalStream syscalls_;
  ArrivalStream ctxswitches_;
  EventQueue queue_;
  std::vector<AttackTracker> trackers_;
  std::vector<Ticks> detected_episode_;

  Ticks now_ = 0;
  ChargeBreakdown charged_;
  Ticks direct_syscall_ = 0;
  Ticks direct_ctxswitch_ = 0;
  Ticks max_handler_ = 0;
  std::size_t syscalls_seen_ = 0;
  std::size_t ctxswitches_seen_ = 0;
  std::size_t vmexits_ = 0;
  std::size_t interrupts_ = 0;
  std::size_t subversions_ = 0;
  std::size_t object_violations_ = 0;
  std::size_t idtr_violations_ = 0;
  std::vector<DetectionRecord> detections_;
};

}  // namespace

std::string strategy_name(const StrategyConfig& strategy) {
  return std::visit(Overloaded{
                        [](const BaselineStrategy&) { return std::string("baseline"); },
                        [](const HrkStrategy&) { return std::string("hrk"); },
                        [](const HfStrategy&) { return std::string("hf"); },
                    },
                    strategy);
}

bool EventQueue::Later::operator()(const Event& x, const Event& y) const {
  if (x.time != y.time) return x.time > y.time;
  if (x.kind != y.kind) return x.kind > y.kind;
  return x.seq > y.seq;
}

void EventQueue::push(Ticks time, EventKind kind, std::uint32_t a, std::uint32_t b, Ticks native) {
  heap_.push(Event{time, kind, seq_++, a, b, native});
}

Event EventQueue::next_event() {
  Event e = heap_.top();
  heap_.pop();
  return e;
}

std::size_t required_pages(const MachineSetup& setup) {
  if (setup.page_size == 0) return 0;
  std::size_t object_pages = 0;
  if (setup.placement == Placement::Spread) {
    object_pages = setup.object_count * ((setup.object_size + setup.page_size - 1) / setup.page_size);
  } else {
    object_pages = (setup.object_count * setup.object_size + setup.page_size - 1) / setup.page_size;
  }
  return kFirstObjectPage + object_pages;
}

GuestMachine build_machine(const MachineSetup& setup) {
  if (setup.object_count == 0) throw ConfigError("objects.count must be at least 1");
  if (setup.object_size == 0) throw ConfigError("objects.size_bytes must be at least 1");
  GuestMachine m(setup.page_count, setup.page_size);
  if (kIdtVectors * kIdtEntrySize > setup.page_size) throw ConfigError("page_size too small to hold the IDT page");
  const std::size_t needed = required_pages(setup);
  if (setup.page_count < needed) {
    throw ConfigError("machine.page_count " + std::to_string(setup.page_count) + " too small, layout needs " +
                      std::to_string(needed));
  }
  m.set_idtr({0, kIdtVectors * kIdtEntrySize}, Privilege::Hypervisor);

  std::vector<std::uint8_t> code(setup.page_size);
  for (std::size_t i = 0; i < code.size(); ++i) code[i] = static_cast<std::uint8_t>(splitmix64(0xc0de + i));
  m.load_module(code, setup.page_size, kMonitorVector, setup.page_size);

  const Addr base = kFirstObjectPage * setup.page_size;
  const std::size_t stride = setup.placement == Placement::Spread
                                 ? (setup.object_size + setup.page_size - 1) / setup.page_size * setup.page_size
                                 : setup.object_size;
  std::vector<std::uint8_t> content(setup.object_size);
  for (std::size_t i = 0; i < setup.object_count; ++i) {
    const Addr addr = base + i * stride;
    for (std::size_t j = 0; j < content.size(); ++j) {
      content[j] = static_cast<std::uint8_t>(splitmix64((static_cast<std::uint64_t>(i) << 20) + j));
    }
    m.write_privileged(addr, content);
    m.register_kernel_object("obj" + std::to_string(i), addr, setup.object_size);
  }
  return m;
}

ScenarioResult run_scenario(GuestMachine machine, const StrategyConfig& strategy, const WorkloadSpec& workload,
                            std::span<const AttackScript> attacks, const CostModel& costs, std::uint64_t seed,
                            const RunOptions& options) {
  Simulator sim(std::move(machine), strategy, workload, attacks, costs, seed, options);
  return sim.run();
}

ScenarioResult run_scenario(const MachineSetup& setup, const StrategyConfig& strategy, const WorkloadSpec& workload,
                            std::span<const AttackScript> attacks, const CostModel& costs, std::uint64_t seed,
                            const RunOptions& options) {
  return run_scenario(build_machine(setup), strategy, workload, attacks, costs, seed, options);
}

OverheadSummary overhead_report(const ScenarioResult& strategy, const ScenarioResult& baseline) {
  if (strategy.seed != baseline.seed || strategy.horizon != baseline.horizon ||
      strategy.syscalls != baseline.syscalls || strategy.ctxswitches != baseline.ctxswitches) {
    throw ConfigError("overhead_report needs results from the same workload, seed and horizon");
  }
  auto pct = [](double value, double base) { return base > 0 ? (value - base) / base * 100.0 : 0.0; };
  OverheadSummary s;
  s.total_pct = pct(static_cast<double>(strategy.total_time), static_cast<double>(baseline.total_time));
  s.syscall_latency_pct = pct(strategy.latency.syscall, baseline.latency.syscall);
  s.ctxswitch_latency_pct = pct(strategy.latency.ctxswitch, baseline.latency.ctxswitch);
  return s;
}

nlohmann::json to_json(const ScenarioResult& r) {
  using nlohmann::json;
  json detections = json::array();
  for (const auto& d : r.detections) {
    detections.push_back({{"attack", d.attack},
                          {"target", d.target},
                          {"tamper_time", to_seconds(d.tamper_time)},
                          {"detected_time", to_seconds(d.detected_time)},
                          {"latency", to_seconds(d.latency())}});
  }
  json traps = json::array();
  for (const auto& t : r.traps) {
    traps.push_back({{"time", to_seconds(t.time)},
                     {"addr", t.addr},
                     {"len", t.len},
                     {"page", t.page},
                     {"kind", std::string(to_string(t.kind))}});
  }
  json attacks = json::array();
  for (std::size_t i = 0; i < r.attacks.size(); ++i) {
    const auto& a = r.attacks[i];
    attacks.push_back({{"index", i},
                       {"attempted", a.attempted},
                       {"applied", a.applied},
                       {"trapped", a.trapped},
                       {"detected_at", a.detected_at ? json(to_seconds(*a.detected_at)) : json(nullptr)},
                       {"evaded", a.evaded}});
  }
  return {
      {"strategy", r.strategy},
      {"seed", r.seed},
      {"horizon_ticks", r.horizon},
      {"total_ticks", r.total_time},
      {"charged_ticks",
       {{"vmexit_checks", r.charged.vmexit_checks},
        {"interrupts", r.charged.interrupts},
        {"traps", r.charged.traps},
        {"total", r.charged.total()}}},
      {"accounting_holds", r.accounting_holds()},
      {"overhead_fraction", r.overhead_fraction},
      {"counts",
       {{"syscalls", r.syscalls},
        {"ctxswitches", r.ctxswitches},
        {"vmexits", r.vmexits},
        {"interrupts", r.interrupts},
        {"subversions", r.subversions},
        {"object_violations", r.object_violations},
        {"idtr_violations", r.idtr_violations}}},
      {"max_handler_duration", to_seconds(r.max_handler_duration)},
      {"per_event_latency_ns", {{"syscall", r.latency.syscall}, {"ctxswitch", r.latency.ctxswitch}}},
      {"detections", detections},
      {"traps", traps},
      {"attacks", attacks},
  };
}

}  // namespace hfsim
