#include "hfsim/time.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "hfsim/errors.hpp"

namespace hfsim {

Ticks parse_seconds(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError("not a number of seconds: '" + std::string(text) + "'");
  }
  const double ns = value * 1e9;
  if (std::fabs(ns) > 9.2e18) throw ConfigError("duration out of range: '" + std::string(text) + "'");
  return static_cast<Ticks>(std::llround(ns));
}

std::string format_seconds(Ticks t) {
  std::string out;
  if (t < 0) {
    out.push_back('-');
    t = -t;
  }
  out += std::to_string(t / kTicksPerSecond);
  Ticks frac = t % kTicksPerSecond;
  if (frac != 0) {
    std::string digits = std::to_string(frac);
    digits.insert(0, 9 - digits.size(), '0');
    while (digits.back() == '0') digits.pop_back();
    out += '.';
    out += digits;
  }
  return out;
}

}  // namespace hfsim
