#include "doctest.h"

#include "hfsim/errors.hpp"
#include "hfsim/time.hpp"

using namespace hfsim;

TEST_CASE("parse_seconds") {
  CHECK(parse_seconds("4") == 4'000'000'000);
  CHECK(parse_seconds("0.5") == 500'000'000);
  CHECK(parse_seconds("28.849e-6") == 28'849);
  CHECK(parse_seconds("0.000000172") == 172);
  CHECK(parse_seconds("0") == 0);
  CHECK_THROWS_AS(parse_seconds(""), ConfigError);
  CHECK_THROWS_AS(parse_seconds("4s"), ConfigError);
  CHECK_THROWS_AS(parse_seconds("abc"), ConfigError);
}

TEST_CASE("format_seconds round-trips") {
  CHECK(format_seconds(4'000'000'000) == "4");
  CHECK(format_seconds(28'849) == "0.000028849");
  CHECK(format_seconds(0) == "0");
  for (Ticks t : {Ticks{1}, Ticks{999'999'999}, Ticks{1'500'000'000}, Ticks{123'456'789'012}, Ticks{-2'500'000'000}}) {
    CHECK(parse_seconds(format_seconds(t)) == t);
  }
}
