#include "hfsim/guest_machine.hpp"

#include <algorithm>
#include <bit>
#include <ostream>

#include "hfsim/errors.hpp"

namespace hfsim {

namespace {

void encode_le64(Addr value, std::uint8_t* out) {
  for (std::size_t i = 0; i < kIdtEntrySize; ++i) out[i] = static_cast<std::uint8_t>(value >> (8 * i));
}

Addr decode_le64(std::span<const std::uint8_t> in) {
  Addr value = 0;
  for (std::size_t i = 0; i < kIdtEntrySize; ++i) value |= static_cast<Addr>(in[i]) << (8 * i);
  return value;
}

bool overlaps(Addr a, std::size_t alen, Addr b, std::size_t blen) {
  return a < b + blen && b < a + alen;
}

}  // namespace

GuestMachine::GuestMachine(std::size_t page_count, std::size_t page_size)
    : page_count_(page_count), page_size_(page_size) {
  if (page_count == 0) throw ConfigError("page_count must be at least 1");
  if (page_size < 64 || !std::has_single_bit(page_size)) {
    throw ConfigError("page_size must be a power of two >= 64, got " + std::to_string(page_size));
  }
  if (page_count > (std::size_t{1} << 40) / page_size) throw ConfigError("machine too large");
  memory_.assign(page_count * page_size, 0);
}

void GuestMachine::check_range(Addr addr, std::size_t len) const {
  if (addr > memory_.size() || len > memory_.size() - addr) {
    throw AddressError("range [" + std::to_string(addr) + ", +" + std::to_string(len) + ") outside " +
                       std::to_string(memory_.size()) + "-byte memory");
  }
}

Page GuestMachine::page(std::size_t index) const {
  if (index >= page_count_) throw AddressError("page " + std::to_string(index) + " out of range");
  return {index, std::span<const std::uint8_t>(memory_).subspan(index * page_size_, page_size_)};
}

WriteOutcome GuestMachine::guest_write(ProtectionRegistry& protections, Addr addr,
                                       std::span<const std::uint8_t> bytes, Ticks now) {
  check_range(addr, bytes.size());
  if (bytes.empty()) return {};
  const std::size_t first = page_of(addr);
  const std::size_t last = page_of(addr + bytes.size() - 1);
  for (std::size_t p = first; p <= last; ++p) {
    if (protections.is_protected(p)) {
      TrapRecord rec{now, addr, bytes.size(), p, protections.classify(addr, bytes.size())};
      protections.record_trap(rec);
      return {WriteOutcome::Variant::Trapped, rec};
    }
  }
  std::copy(bytes.begin(), bytes.end(), memory_.begin() + static_cast<std::ptrdiff_t>(addr));
  return {};
}

void GuestMachine::write_privileged(Addr addr, std::span<const std::uint8_t> bytes) {
  check_range(addr, bytes.size());
  std::copy(bytes.begin(), bytes.end(), memory_.begin() + static_cast<std::ptrdiff_t>(addr));
}

std::vector<std::uint8_t> GuestMachine::guest_read(Addr addr, std::size_t len) const {
  auto v = view(addr, len);
  return {v.begin(), v.end()};
}

std::span<const std::uint8_t> GuestMachine::view(Addr addr, std::size_t len) const {
  check_range(addr, len);
  return std::span<const std::uint8_t>(memory_).subspan(static_cast<std::size_t>(addr), len);
}

ModuleRegion GuestMachine::load_module(std::span<const std::uint8_t> code, Addr addr,
                                       std::uint32_t handler_vector, std::size_t data_len) {
  if (addr % page_size_ != 0) throw StateError("module address must be page-aligned");
  if (idtr_.limit == 0) throw StateError("IDT must be placed before loading the module");
  if (handler_vector >= idtr_.vector_count()) {
    throw StateError("handler vector " + std::to_string(handler_vector) + " beyond IDT limit");
  }
  auto round_up = [this](std::size_t n) { return (n + page_size_ - 1) / page_size_ * page_size_; };
  const std::size_t code_len = std::max<std::size_t>(round_up(code.size()), page_size_);
  const std::size_t total = code_len + round_up(data_len);
  check_range(addr, total);
  for (const auto& obj : objects_) {
    if (overlaps(obj.addr, obj.len, addr, total)) {
      throw StateError("module region overlaps kernel object '" + obj.name + "'");
    }
  }
  if (overlaps(idtr_.base, idtr_.limit, addr, total)) throw StateError("module region overlaps the IDT");

  std::fill_n(memory_.begin() + static_cast<std::ptrdiff_t>(addr), total, 0);
  write_privileged(addr, code);
  set_idt_entry_privileged(handler_vector, addr);
  module_ = ModuleRegion{addr, total, handler_vector, addr + code_len};
  return *module_;
}

ObjectId GuestMachine::register_kernel_object(std::string name, Addr addr, std::size_t len) {
  if (len == 0) throw StateError("kernel object '" + name + "' has zero length");
  check_range(addr, len);
  if (module_ && overlaps(addr, len, module_->addr, module_->len)) {
    throw StateError("kernel object '" + name + "' overlaps the monitoring module");
  }
  const auto id = static_cast<ObjectId>(objects_.size());
  objects_.push_back({id, std::move(name), addr, len});
  return id;
}

const KernelObjectDescriptor& GuestMachine::object(ObjectId id) const {
  if (id >= objects_.size()) throw StateError("unknown object id " + std::to_string(id));
  return objects_[id];
}

WriteOutcome GuestMachine::set_idt_entry(ProtectionRegistry& protections, std::uint32_t vector,
                                         Addr handler, Ticks now) {
  if (vector >= idtr_.vector_count()) throw StateError("vector " + std::to_string(vector) + " beyond IDT limit");
  std::uint8_t slot[kIdtEntrySize];
  encode_le64(handler, slot);
  return guest_write(protections, idtr_.base + kIdtEntrySize * vector, slot, now);
}

void GuestMachine::set_idt_entry_privileged(std::uint32_t vector, Addr handler) {
  if (vector >= idtr_.vector_count()) throw StateError("vector " + std::to_string(vector) + " beyond IDT limit");
  std::uint8_t slot[kIdtEntrySize];
  encode_le64(handler, slot);
  write_privileged(idtr_.base + kIdtEntrySize * vector, slot);
}

std::optional<Addr> GuestMachine::idt_entry(std::uint32_t vector) const {
  if (vector >= idtr_.vector_count()) return std::nullopt;
  return decode_le64(view(idtr_.base + kIdtEntrySize * vector, kIdtEntrySize));
}

void GuestMachine::set_idtr(Idtr idtr, Privilege) {
  if (idtr.limit % kIdtEntrySize != 0) throw StateError("IDTR limit must be a multiple of 8");
  check_range(idtr.base, static_cast<std::size_t>(idtr.limit));
  idtr_ = idtr;
}

void GuestMachine::export_snapshot(std::ostream& out) const {
  for (std::size_t p = 0; p < page_count_; ++p) {
    auto bytes = page(p).bytes;
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

bool GuestMachine::operator==(const GuestMachine& other) const {
  auto same_objects = [&] {
    return std::equal(objects_.begin(), objects_.end(), other.objects_.begin(), other.objects_.end(),
                      [](const auto& a, const auto& b) {
                        return a.id == b.id && a.name == b.name && a.addr == b.addr && a.len == b.len;
                      });
  };
  auto same_module = [&] {
    if (module_.has_value() != other.module_.has_value()) return false;
    if (!module_) return true;
    return module_->addr == other.module_->addr && module_->len == other.module_->len &&
           module_->handler_vector == other.module_->handler_vector &&
           module_->data_addr == other.module_->data_addr;
  };
  return page_size_ == other.page_size_ && memory_ == other.memory_ && idtr_ == other.idtr_ &&
         same_objects() && same_module();
}

}  // namespace hfsim
