#include "hfsim/scenario_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hfsim/integrity.hpp"

namespace hfsim {

namespace {

constexpr int kMaxIncludeDepth = 8;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawEntry {
  std::string key;
  std::string value;
  std::string where;  // file:line
};

struct RawSection {
  std::string name;
  std::vector<RawEntry> entries;
};

class RawConfig {
 public:
  RawSection& section(const std::string& name) {
    for (auto& s : sections_) {
      if (s.name == name) return s;
    }
    sections_.push_back({name, {}});
    return sections_.back();
  }

  void set(const std::string& section_name, RawEntry entry) {
    auto& s = section(section_name);
    for (auto& e : s.entries) {
      if (e.key == entry.key) {
        e = std::move(entry);
        return;
      }
    }
    s.entries.push_back(std::move(entry));
  }

  const std::vector<RawSection>& sections() const { return sections_; }

 private:
  std::vector<RawSection> sections_;
};

void read_text(std::string_view text, const std::filesystem::path& base_dir, const std::string& origin,
               RawConfig& raw, std::vector<ConfigIssue>& issues, int depth) {
  std::string current;
  bool seen_section = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({where, "malformed section header"});
        continue;
      }
      current = std::string(trim(line.substr(1, line.size() - 2)));
      seen_section = true;
      raw.section(current);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      issues.push_back({where, "expected key = value"});
      continue;
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) {
      issues.push_back({where, "empty key"});
      continue;
    }
    if (!seen_section) {
      if (key != "include") {
        issues.push_back({key, "only 'include' may appear before the first section"});
        continue;
      }
      if (depth >= kMaxIncludeDepth) {
        issues.push_back({"include", "includes nested too deeply at " + where});
        continue;
      }
      const auto path = base_dir / value;
      std::ifstream in(path);
      if (!in) {
        issues.push_back({"include", "cannot read '" + path.string() + "'"});
        continue;
      }
      std::stringstream buf;
      buf << in.rdbuf();
      read_text(buf.str(), path.parent_path(), path.filename().string(), raw, issues, depth + 1);
      continue;
    }
    raw.set(current, {std::move(key), std::move(value), where});
  }
}

// Typed access to one section; keys never read are reported as unknown.
class SectionReader {
 public:
  SectionReader(const RawSection& section, std::vector<ConfigIssue>& issues) : section_(section), issues_(issues) {}

  ~SectionReader() {
    for (const auto& e : section_.entries) {
      if (!used_.count(e.key)) issues_.push_back({qualified(e.key), "unknown key"});
    }
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::optional<std::string> text(const std::string& key, bool required) {
    const RawEntry* e = find(key);
    used_.insert(key);
    if (!e) {
      if (required) issues_.push_back({qualified(key), "missing required key"});
      return std::nullopt;
    }
    return e->value;
  }

  template <class T>
  void unsigned_int(const std::string& key, T& out, bool required) {
    auto v = text(key, required);
    if (!v) return;
    std::string_view s = *v;
    int base = 10;
    if (s.starts_with("0x") || s.starts_with("0X")) {
      base = 16;
      s.remove_prefix(2);
    }
    if (!s.empty() && s.front() == '-') {
      issues_.push_back({qualified(key), "must be >= 0"});
      return;
    }
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() ||
        value > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
      issues_.push_back({qualified(key), "not a valid non-negative integer: '" + *v + "'"});
      return;
    }
    out = static_cast<T>(value);
  }

  void rate(const std::string& key, double& out, bool required) {
    auto v = text(key, required);
    if (!v) return;
    double value = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
    if (ec != std::errc{} || ptr != v->data() + v->size() || !std::isfinite(value)) {
      issues_.push_back({qualified(key), "not a number: '" + *v + "'"});
      return;
    }
    if (value < 0) {
      issues_.push_back({qualified(key), "must be >= 0"});
      return;
    }
    out = value;
  }

  void seconds(const std::string& key, Ticks& out, bool required) {
    auto v = text(key, required);
    if (!v) return;
    try {
      const Ticks t = parse_seconds(*v);
      if (t < 0) {
        issues_.push_back({qualified(key), "must be >= 0"});
        return;
      }
      out = t;
    } catch (const ConfigError& e) {
      issues_.push_back({qualified(key), e.what()});
    }
  }

  template <class E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<std::string_view, E>> options,
              bool required) {
    auto v = text(key, required);
    if (!v) return;
    for (const auto& [name, value] : options) {
      if (*v == name) {
        out = value;
        return;
      }
    }
    std::string expected;
    for (const auto& [name, value] : options) expected += (expected.empty() ? "" : "|") + std::string(name);
    issues_.push_back({qualified(key), "expected one of " + expected + ", got '" + *v + "'"});
  }

  void windows(const std::string& key, std::vector<TimeWindow>& out, bool required) {
    auto v = text(key, required);
    if (!v) return;
    std::string_view rest = *v;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string_view item = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) {
        issues_.push_back({qualified(key), "window must be start:end, got '" + std::string(item) + "'"});
        return;
      }
      try {
        out.push_back({parse_seconds(trim(item.substr(0, colon))), parse_seconds(trim(item.substr(colon + 1)))});
      } catch (const ConfigError& e) {
        issues_.push_back({qualified(key), e.what()});
        return;
      }
    }
  }

  void issue(const std::string& key, std::string reason) { issues_.push_back({qualified(key), std::move(reason)}); }

 private:
  const RawEntry* find(const std::string& key) const {
    for (const auto& e : section_.entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }
  std::string qualified(const std::string& key) const { return section_.name + "." + key; }

  const RawSection& section_;
  std::vector<ConfigIssue>& issues_;
  std::set<std::string> used_;
};

void read_flip(SectionReader& r, ByteFlip& flip) {
  r.unsigned_int("offset", flip.offset, false);
  r.unsigned_int("xor", flip.xor_mask, false);
}

StrategySpec read_strategy(const RawSection& s, std::string label, std::vector<ConfigIssue>& issues) {
  SectionReader r(s, issues);
  StrategySpec spec;
  spec.label = std::move(label);
  r.choice("kind", spec.kind,
           {{"baseline", StrategyKind::Baseline}, {"hrk", StrategyKind::Hrk}, {"hf", StrategyKind::Hf}}, true);
  if (spec.kind == StrategyKind::Hrk) {
    r.unsigned_int("batch_k", spec.batch_k, true);
    if (spec.batch_k == 0) r.issue("batch_k", "must be >= 1");
  } else if (spec.kind == StrategyKind::Hf) {
    r.choice("schedule", spec.schedule,
             {{"periodic", ScheduleMode::Periodic},
              {"jittered", ScheduleMode::PeriodicJittered},
              {"visible", ScheduleMode::GuestVisible}},
             false);
    r.seconds("period", spec.period, true);
    if (spec.period <= 0) r.issue("period", "must be > 0");
    if (spec.schedule == ScheduleMode::PeriodicJittered) {
      r.seconds("jitter", spec.jitter, true);
      r.unsigned_int("schedule_seed", spec.schedule_seed, false);
      if (spec.jitter >= spec.period) r.issue("jitter", "must be smaller than period");
    }
    r.unsigned_int("batch", spec.hf_batch, false);
  }
  return spec;
}

std::optional<AttackScript> read_attack(const RawSection& s, std::vector<ConfigIssue>& issues) {
  SectionReader r(s, issues);
  enum class Kind { None, Persistent, Transient, Code, Idt, Idtr } kind = Kind::None;
  r.choice("kind", kind,
           {{"persistent", Kind::Persistent},
            {"transient", Kind::Transient},
            {"code", Kind::Code},
            {"idt", Kind::Idt},
            {"idtr", Kind::Idtr}},
           true);
  switch (kind) {
    case Kind::Persistent: {
      PersistentTamper a;
      r.unsigned_int("object", a.object, true);
      r.seconds("at", a.at, true);
      read_flip(r, a.mutation);
      return a;
    }
    case Kind::Transient: {
      TransientTamper a;
      r.unsigned_int("object", a.object, true);
      r.windows("windows", a.dirty_windows, true);
      r.choice("knowledge", a.knowledge,
               {{"none", ScheduleKnowledge::None}, {"visible", ScheduleKnowledge::GuestVisibleOnly}}, false);
      read_flip(r, a.mutation);
      Ticks prev = 0;
      for (const auto& w : a.dirty_windows) {
        if (w.start < prev || w.end <= w.start) {
          r.issue("windows", "windows must be non-empty, ordered and non-overlapping");
          break;
        }
        prev = w.end;
      }
      return a;
    }
    case Kind::Code: {
      CodeTamper a;
      r.unsigned_int("offset", a.offset, true);
      r.seconds("at", a.at, true);
      r.unsigned_int("value", a.value, false);
      return a;
    }
    case Kind::Idt: {
      IdtTamper a;
      r.unsigned_int("vector", a.vector, true);
      r.unsigned_int("handler", a.new_handler, true);
      r.seconds("at", a.at, true);
      return a;
    }
    case Kind::Idtr: {
      IdtrTamper a;
      r.unsigned_int("base", a.new_base, true);
      r.seconds("at", a.at, true);
      return a;
    }
    case Kind::None:
      break;
  }
  return std::nullopt;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << "0x" << std::hex << v;
  return out.str();
}

std::string format_rate(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_windows(const std::vector<TimeWindow>& windows) {
  std::string out;
  for (const auto& w : windows) {
    if (!out.empty()) out += ", ";
    out += format_seconds(w.start) + ":" + format_seconds(w.end);
  }
  return out;
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Baseline: return "baseline";
    case StrategyKind::Hrk: return "hrk";
    case StrategyKind::Hf: return "hf";
  }
  return "baseline";
}

StrategyConfig StrategySpec::instantiate(std::uint64_t run_seed) const {
  switch (kind) {
    case StrategyKind::Baseline: return BaselineStrategy{};
    case StrategyKind::Hrk: return HrkStrategy{batch_k};
    case StrategyKind::Hf: {
      switch (schedule) {
        case ScheduleMode::Periodic: return HfStrategy{FiringSchedule::periodic(period), hf_batch};
        case ScheduleMode::GuestVisible: return HfStrategy{FiringSchedule::guest_visible(period), hf_batch};
        case ScheduleMode::PeriodicJittered: {
          std::uint64_t mixed = schedule_seed ^ (run_seed * 0x9e3779b97f4a7c15ull);
          return HfStrategy{FiringSchedule::jittered(period, jitter, mixed), hf_batch};
        }
      }
    }
  }
  return BaselineStrategy{};
}

std::vector<AttackScript> ScenarioConfig::expanded_attacks() const {
  std::vector<AttackScript> out = attacks;
  if (sweep && sweep->count > 0) {
    const std::size_t n = std::max<std::size_t>(machine.object_count, 1);
    for (std::size_t i = 0; i < sweep->count; ++i) {
      PersistentTamper t;
      t.object = static_cast<ObjectId>((i * sweep->object_stride) % n);
      t.at = sweep->count == 1 ? sweep->start
                               : sweep->start + (sweep->end - sweep->start) * static_cast<Ticks>(i) /
                                                    static_cast<Ticks>(sweep->count - 1);
      t.mutation = sweep->mutation;
      out.emplace_back(t);
    }
  }
  return out;
}

ConfigParseError::ConfigParseError(std::vector<ConfigIssue> issues)
    : ConfigError([&] {
        std::string msg = "invalid scenario config:";
        for (const auto& i : issues) msg += "\n  " + i.key + ": " + i.reason;
        return msg;
      }()),
      issues_(std::move(issues)) {}

ScenarioConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  std::vector<ConfigIssue> issues;
  RawConfig raw;
  read_text(text, base_dir, "<config>", raw, issues, 0);

  ScenarioConfig cfg;
  bool have_machine = false, have_objects = false, have_workload = false, have_costs = false;
  for (const auto& s : raw.sections()) {
    if (s.name == "scenario") {
      SectionReader r(s, issues);
      if (auto v = r.text("name", false)) cfg.name = *v;
      r.unsigned_int("repeats", cfg.repeats, false);
      if (cfg.repeats == 0) r.issue("repeats", "must be >= 1");
      r.unsigned_int("seed", cfg.seed, false);
    } else if (s.name == "machine") {
      have_machine = true;
      SectionReader r(s, issues);
      r.unsigned_int("page_count", cfg.machine.page_count, true);
      r.unsigned_int("page_size", cfg.machine.page_size, false);
    } else if (s.name == "objects") {
      have_objects = true;
      SectionReader r(s, issues);
      r.unsigned_int("count", cfg.machine.object_count, true);
      r.unsigned_int("size_bytes", cfg.machine.object_size, false);
      r.choice("placement", cfg.machine.placement, {{"packed", Placement::Packed}, {"spread", Placement::Spread}},
               false);
      if (cfg.machine.object_count == 0 && r.has("count")) r.issue("count", "must be >= 1");
    } else if (s.name == "workload") {
      have_workload = true;
      SectionReader r(s, issues);
      r.rate("syscall_rate", cfg.workload.syscall_rate, true);
      r.rate("ctxswitch_rate", cfg.workload.ctxswitch_rate, true);
      r.choice("arrival", cfg.workload.arrival, {{"poisson", Arrival::Poisson}, {"fixed", Arrival::Fixed}}, false);
      r.seconds("horizon", cfg.workload.horizon, true);
      if (cfg.workload.horizon == 0 && r.has("horizon")) r.issue("horizon", "must be > 0");
    } else if (s.name == "costs") {
      have_costs = true;
      SectionReader r(s, issues);
      r.seconds("vmexit", cfg.costs.vmexit, true);
      r.seconds("vmentry", cfg.costs.vmentry, true);
      r.seconds("interrupt_delivery", cfg.costs.interrupt_delivery, true);
      r.seconds("map_page", cfg.costs.map_page, true);
      r.seconds("hash_per_byte", cfg.costs.hash_per_byte, true);
      r.seconds("syscall_base", cfg.costs.syscall_base, true);
      r.seconds("ctxswitch_base", cfg.costs.ctxswitch_base, true);
    } else if (s.name.starts_with("strategy.") && s.name.size() > 9) {
      cfg.strategies.push_back(read_strategy(s, s.name.substr(9), issues));
    } else if (s.name.starts_with("attack.") && s.name.size() > 7) {
      if (auto a = read_attack(s, issues)) {
        cfg.attack_labels.push_back(s.name.substr(7));
        cfg.attacks.push_back(std::move(*a));
      }
    } else if (s.name == "sweep") {
      SectionReader r(s, issues);
      AttackSweep sw;
      if (auto kind = r.text("kind", true); kind && *kind != "persistent") {
        r.issue("kind", "only persistent sweeps are supported");
      }
      r.unsigned_int("count", sw.count, true);
      r.seconds("start", sw.start, true);
      r.seconds("end", sw.end, true);
      r.unsigned_int("object_stride", sw.object_stride, false);
      read_flip(r, sw.mutation);
      if (sw.end < sw.start) r.issue("end", "must be >= start");
      cfg.sweep = sw;
    } else {
      issues.push_back({s.name, "unknown section"});
    }
  }
  if (!have_machine) issues.push_back({"machine.page_count", "missing required key"});
  if (!have_objects) issues.push_back({"objects.count", "missing required key"});
  if (!have_workload) {
    for (const char* k : {"workload.syscall_rate", "workload.ctxswitch_rate", "workload.horizon"}) {
      issues.push_back({k, "missing required key"});
    }
  }
  if (!have_costs) {
    for (const char* k : {"costs.vmexit", "costs.vmentry", "costs.interrupt_delivery", "costs.map_page",
                          "costs.hash_per_byte", "costs.syscall_base", "costs.ctxswitch_base"}) {
      issues.push_back({k, "missing required key"});
    }
  }
  if (cfg.strategies.empty()) issues.push_back({"strategy", "at least one [strategy.<label>] section required"});
  if (cfg.strategies.size() > 2) issues.push_back({"strategy", "at most two strategies (A/B) per scenario"});

  if (issues.empty()) {
    // Layout and attack targets are checked against the machine that will be built.
    try {
      const GuestMachine m = build_machine(cfg.machine);
      for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        try {
          validate_attack(cfg.attacks[i], m);
        } catch (const ConfigError& e) {
          issues.push_back({"attack." + cfg.attack_labels[i], e.what()});
        }
      }
    } catch (const ConfigError& e) {
      issues.push_back({"machine", e.what()});
    }
  }
  if (!issues.empty()) throw ConfigParseError(std::move(issues));
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError({{"<file>", "cannot read '" + path.string() + "'"}});
  std::stringstream buf;
  buf << in.rdbuf();
  ScenarioConfig cfg = parse_config(buf.str(), path.parent_path());
  if (cfg.name.empty()) cfg.name = path.stem().string();
  return cfg;
}

std::string serialize_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "[scenario]\n";
  if (!c.name.empty()) out << "name = " << c.name << "\n";
  out << "repeats = " << c.repeats << "\nseed = " << c.seed << "\n\n";
  out << "[machine]\npage_count = " << c.machine.page_count << "\npage_size = " << c.machine.page_size << "\n\n";
  out << "[objects]\ncount = " << c.machine.object_count << "\nsize_bytes = " << c.machine.object_size
      << "\nplacement = " << (c.machine.placement == Placement::Packed ? "packed" : "spread") << "\n\n";
  out << "[workload]\nsyscall_rate = " << format_rate(c.workload.syscall_rate)
      << "\nctxswitch_rate = " << format_rate(c.workload.ctxswitch_rate)
      << "\narrival = " << (c.workload.arrival == Arrival::Poisson ? "poisson" : "fixed")
      << "\nhorizon = " << format_seconds(c.workload.horizon) << "\n\n";
  out << "[costs]\nvmexit = " << format_seconds(c.costs.vmexit) << "\nvmentry = " << format_seconds(c.costs.vmentry)
      << "\ninterrupt_delivery = " << format_seconds(c.costs.interrupt_delivery)
      << "\nmap_page = " << format_seconds(c.costs.map_page)
      << "\nhash_per_byte = " << format_seconds(c.costs.hash_per_byte)
      << "\nsyscall_base = " << format_seconds(c.costs.syscall_base)
      << "\nctxswitch_base = " << format_seconds(c.costs.ctxswitch_base) << "\n";
  for (const auto& s : c.strategies) {
    out << "\n[strategy." << s.label << "]\nkind = " << to_string(s.kind) << "\n";
    if (s.kind == StrategyKind::Hrk) out << "batch_k = " << s.batch_k << "\n";
    if (s.kind == StrategyKind::Hf) {
      out << "schedule = " << to_string(s.schedule) << "\nperiod = " << format_seconds(s.period) << "\n";
      if (s.schedule == ScheduleMode::PeriodicJittered) {
        out << "jitter = " << format_seconds(s.jitter) << "\nschedule_seed = " << s.schedule_seed << "\n";
      }
      out << "batch = " << s.hf_batch << "\n";
    }
  }
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    out << "\n[attack." << c.attack_labels.at(i) << "]\n";
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, PersistentTamper>) {
            out << "kind = persistent\nobject = " << a.object << "\nat = " << format_seconds(a.at)
                << "\noffset = " << a.mutation.offset << "\nxor = " << hex(a.mutation.xor_mask) << "\n";
          } else if constexpr (std::is_same_v<T, TransientTamper>) {
            out << "kind = transient\nobject = " << a.object << "\nwindows = " << format_windows(a.dirty_windows)
                << "\nknowledge = " << (a.knowledge == ScheduleKnowledge::None ? "none" : "visible")
                << "\noffset = " << a.mutation.offset << "\nxor = " << hex(a.mutation.xor_mask) << "\n";
          } else if constexpr (std::is_same_v<T, CodeTamper>) {
            out << "kind = code\noffset = " << a.offset << "\nat = " << format_seconds(a.at)
                << "\nvalue = " << hex(a.value) << "\n";
          } else if constexpr (std::is_same_v<T, IdtTamper>) {
            out << "kind = idt\nvector = " << a.vector << "\nhandler = " << hex(a.new_handler)
                << "\nat = " << format_seconds(a.at) << "\n";
          } else {
            out << "kind = idtr\nbase = " << hex(a.new_base) << "\nat = " << format_seconds(a.at) << "\n";
          }
        },
        c.attacks[i]);
  }
  if (c.sweep) {
    out << "\n[sweep]\nkind = persistent\ncount = " << c.sweep->count << "\nstart = " << format_seconds(c.sweep->start)
        << "\nend = " << format_seconds(c.sweep->end) << "\nobject_stride = " << c.sweep->object_stride
        << "\noffset = " << c.sweep->mutation.offset << "\nxor = " << hex(c.sweep->mutation.xor_mask) << "\n";
  }
  return out.str();
}

std::string config_digest(const ScenarioConfig& config) {
  const std::string text = serialize_config(config);
  const Digest d = compute_digest(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << d.value;
  return out.str();
}

}  // namespace hfsim
