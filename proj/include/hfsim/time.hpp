#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hfsim {

// Simulated time in integer nanoseconds. All accounting is exact in this unit.
using Ticks = std::int64_t;

inline constexpr Ticks kTicksPerSecond = 1'000'000'000;

constexpr double to_seconds(Ticks t) { return static_cast<double>(t) / 1e9; }

// Parses a decimal number of seconds ("4", "0.5", "28.849e-6") into ticks,
// rounding to the nearest nanosecond. Throws ConfigError on malformed text.
Ticks parse_seconds(std::string_view text);

// Shortest exact decimal rendering of a tick count in seconds ("4", "0.000028849").
std::string format_seconds(Ticks t);

}  // namespace hfsim
