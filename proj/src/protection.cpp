#include "hfsim/protection.hpp"

#include <algorithm>
#include <sstream>

#include "hfsim/errors.hpp"

namespace hfsim {

std::string_view to_string(TrapKind kind) {
  switch (kind) {
    case TrapKind::ModuleCodeWrite: return "ModuleCodeWrite";
    case TrapKind::IdtWrite: return "IdtWrite";
    case TrapKind::OtherProtectedWrite: return "OtherProtectedWrite";
  }
  return "OtherProtectedWrite";
}

std::string to_json_line(const TrapRecord& rec) {
  std::ostringstream out;
  out << "{\"time\":" << format_seconds(rec.time) << ",\"addr\":" << rec.addr << ",\"len\":" << rec.len
      << ",\"page\":" << rec.page << ",\"kind\":\"" << to_string(rec.kind) << "\"}";
  return out.str();
}

ProtectionRegistry::ProtectionRegistry(std::size_t page_count) : protected_(page_count, false) {}

void ProtectionRegistry::check_range(PageRange pages) const {
  if (pages.end() > protected_.size() || pages.end() < pages.first) {
    throw AddressError("page range [" + std::to_string(pages.first) + ", " + std::to_string(pages.end()) +
                       ") beyond " + std::to_string(protected_.size()) + " pages");
  }
}

void ProtectionRegistry::protect_pages(PageRange pages, Ticks now) {
  check_range(pages);
  std::fill_n(protected_.begin() + static_cast<std::ptrdiff_t>(pages.first), pages.count, true);
  changes_.push_back({now, pages, true});
}

void ProtectionRegistry::unprotect_pages(PageRange pages, Ticks now) {
  const std::size_t first = std::min(pages.first, protected_.size());
  const std::size_t last = std::min(pages.end(), protected_.size());
  for (std::size_t p = first; p < last; ++p) protected_[p] = false;
  changes_.push_back({now, pages, false});
}

bool ProtectionRegistry::is_protected(std::size_t page) const {
  return page < protected_.size() && protected_[page];
}

bool ProtectionRegistry::any_protected(std::size_t first, std::size_t last) const {
  for (std::size_t p = first; p <= last && p < protected_.size(); ++p) {
    if (protected_[p]) return true;
  }
  return false;
}

std::vector<std::size_t> ProtectionRegistry::protected_pages() const {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < protected_.size(); ++p) {
    if (protected_[p]) out.push_back(p);
  }
  return out;
}

void ProtectionRegistry::label_region(Addr addr, std::size_t len, TrapKind kind) {
  labels_.push_back({addr, len, kind});
}

TrapKind ProtectionRegistry::classify(Addr addr, std::size_t len) const {
  const Addr end = addr + len;
  for (const Label& l : labels_) {
    if (addr < l.addr + l.len && l.addr < end) return l.kind;
  }
  return TrapKind::OtherProtectedWrite;
}

void ProtectionRegistry::record_trap(const TrapRecord& rec) {
  if (!traps_.empty() && rec.time < traps_.back().time) {
    throw StateError("trap log must be time-ordered");
  }
  if (!is_protected(rec.page)) throw StateError("trap recorded on unprotected page " + std::to_string(rec.page));
  traps_.push_back(rec);
}

}  // namespace hfsim
