// Independent reference computations used as test oracles. None of these
// call into the library.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// FNV-1a 64 with the prime multiply spelled out as shifts and adds
// (0x100000001b3 = 2^40 + 2^8 + 0xb3).
inline std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h = (h << 40) + (h << 8) + (h << 7) + (h << 5) + (h << 4) + (h << 1) + h;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& v) { return fnv1a64(v.data(), v.size()); }

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

inline std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

// Jittered firing i (1-based) regenerated from a fresh engine.
inline std::vector<std::int64_t> jittered_firings(std::int64_t period, std::int64_t jitter, std::uint64_t seed,
                                                  std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> out;
  for (std::size_t i = 1; i <= count; ++i) {
    const std::uint64_t span = static_cast<std::uint64_t>(2 * jitter + 1);
    const auto offset = static_cast<std::int64_t>(rng() % span) - jitter;
    out.push_back(static_cast<std::int64_t>(i) * period + offset);
  }
  return out;
}

// Length of the overlap of inclusive integer ranges [a0, a1] and [b0, b1].
inline std::int64_t overlap(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
  const std::int64_t lo = a0 > b0 ? a0 : b0;
  const std::int64_t hi = a1 < b1 ? a1 : b1;
  return hi >= lo ? hi - lo + 1 : 0;
}

}  // namespace oracle
