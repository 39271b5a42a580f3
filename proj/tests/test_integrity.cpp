#include "doctest.h"

#include <algorithm>
#include <random>

#include "hfsim/errors.hpp"
#include "hfsim/integrity.hpp"
#include "oracles.hpp"

using namespace hfsim;

namespace {

GuestMachine machine_with_objects(std::size_t n, std::size_t len = 16, std::uint64_t seed = 1) {
  GuestMachine m(8, 4096);
  m.set_idtr({0, 2048}, Privilege::Hypervisor);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Addr addr = 4096 + i * len;
    m.write_privileged(addr, oracle::random_bytes(rng, len));
    m.register_kernel_object("obj" + std::to_string(i), addr, len);
  }
  return m;
}

void flip(GuestMachine& m, ObjectId id, std::size_t offset = 0) {
  auto b = m.guest_read(m.object(id).addr + offset, 1);
  b[0] ^= 0x01;
  m.write_privileged(m.object(id).addr + offset, b);
}

std::vector<ObjectId> ids(const std::vector<Violation>& vs) {
  std::vector<ObjectId> out;
  for (const auto& v : vs) out.push_back(v.object_id);
  return out;
}

}  // namespace

TEST_CASE("compute_digest") {
  auto d = [](const std::string& s) {
    return compute_digest({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}).value;
  };
  CHECK(d("") == 0xcbf29ce484222325ull);
  CHECK(d("a") == oracle::fnv1a64("a"));
  CHECK(d("a") == 0xaf63dc4c8601ec8cull);
  CHECK(d("foobar") == 0x85944171f73967e8ull);

  Fnv1a64 inc;
  const std::string text = "incremental digest";
  inc.update({reinterpret_cast<const std::uint8_t*>(text.data()), 5});
  inc.update({reinterpret_cast<const std::uint8_t*>(text.data()) + 5, text.size() - 5});
  CHECK(inc.finalize().value == d(text));
}

TEST_CASE("every single-bit flip of a 64-byte buffer changes the digest") {
  std::mt19937_64 rng(3);
  auto buf = oracle::random_bytes(rng, 64);
  const Digest base = compute_digest(buf);
  for (std::size_t i = 0; i < 64; ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      buf[i] ^= static_cast<std::uint8_t>(1u << bit);
      CHECK(compute_digest(buf) != base);
      buf[i] ^= static_cast<std::uint8_t>(1u << bit);
    }
  }
}

TEST_CASE("snapshot_baselines") {
  GuestMachine empty(2);
  CHECK_THROWS_AS(snapshot_baselines(empty), ConfigError);

  GuestMachine m = machine_with_objects(10);
  BaselineTable t = snapshot_baselines(m);
  CHECK(t.size() == 10);
  CHECK(t.cursor == 0);
  CHECK(t.idtr == m.idtr());
  for (ObjectId i = 0; i < 10; ++i) {
    CHECK(t.entries[i].value == oracle::fnv1a64(m.guest_read(m.object(i).addr, m.object(i).len)));
  }
  CHECK(check_all(m, t, {}).clean());

  flip(m, 4);
  auto r = check_all(m, t, {});
  CHECK(ids(r.violations) == std::vector<ObjectId>{4});
}

TEST_CASE("snapshot of 15000 objects") {
  GuestMachine m(256, 4096);
  m.set_idtr({0, 2048}, Privilege::Hypervisor);
  for (std::size_t i = 0; i < 15000; ++i) m.register_kernel_object("o", 3 * 4096 + 64 * i, 64);
  CHECK(snapshot_baselines(m).size() == 15000);
}

TEST_CASE("check_batch round-robin") {
  GuestMachine m = machine_with_objects(5);
  BaselineTable t = snapshot_baselines(m);
  CostModel costs;
  costs.hash_per_byte = 2;
  auto r1 = check_batch(m, t, 2, costs);
  auto r2 = check_batch(m, t, 2, costs);
  auto r3 = check_batch(m, t, 2, costs);
  CHECK(r1.checked == std::vector<ObjectId>{0, 1});
  CHECK(r2.checked == std::vector<ObjectId>{2, 3});
  CHECK(r3.checked == std::vector<ObjectId>{4});
  CHECK(t.cursor == 0);
  CHECK(r1.duration == 2 * 2 * 16);
  CHECK(r1.bytes_hashed == 32);
  CHECK_FALSE(r1.idtr_checked);
  CHECK(r3.idtr_checked);

  CHECK_THROWS_AS(check_batch(m, t, 0, costs), ConfigError);
}

TEST_CASE("violation is reported by the batch whose window contains it") {
  // brute-force cursor walk: for every target, k and start cursor, the
  // first report listing the object is the first window that covers it
  for (std::size_t n : {1u, 5u, 7u}) {
    for (std::size_t k = 1; k <= n + 1; ++k) {
      for (ObjectId target = 0; target < n; ++target) {
        GuestMachine m = machine_with_objects(n);
        BaselineTable t = snapshot_baselines(m);
        flip(m, target);
        std::size_t expected_call = 0;
        for (std::size_t call = 1, pos = 0; expected_call == 0; ++call) {
          const std::size_t end = std::min(pos + k, n);
          if (target >= pos && target < end) expected_call = call;
          pos = end == n ? 0 : end;
        }
        std::size_t found_call = 0;
        for (std::size_t call = 1; call <= n + 1 && found_call == 0; ++call) {
          if (!check_batch(m, t, k, {}).violations.empty()) found_call = call;
        }
        CHECK(found_call == expected_call);
      }
    }
  }
}

TEST_CASE("k >= N behaves as check_all") {
  GuestMachine m = machine_with_objects(6);
  BaselineTable t = snapshot_baselines(m);
  flip(m, 2);
  flip(m, 5);
  auto all = check_all(m, t, {});
  auto batch = check_batch(m, t, 10, {});
  CHECK(batch.checked == all.checked);
  CHECK(ids(batch.violations) == ids(all.violations));
  CHECK(batch.idtr_checked);
  CHECK(t.cursor == 0);
}

TEST_CASE("check_all with two tampered objects") {
  GuestMachine m = machine_with_objects(12, 24);
  BaselineTable t = snapshot_baselines(m);
  flip(m, 3, 7);
  flip(m, 9, 23);
  auto r = check_all(m, t, {});
  std::vector<ObjectId> expected;
  for (ObjectId i = 0; i < 12; ++i) {
    const auto& o = m.object(i);
    if (oracle::fnv1a64(m.guest_read(o.addr, o.len)) != t.entries[i].value) expected.push_back(i);
  }
  CHECK(ids(r.violations) == expected);
  CHECK(expected == std::vector<ObjectId>{3, 9});
  CHECK(r.checked.size() == 12);
  CHECK(r.pages_touched == 1);
}

TEST_CASE("IDTR pseudo-object") {
  GuestMachine m = machine_with_objects(3);
  BaselineTable t = snapshot_baselines(m);
  CHECK_FALSE(verify_idtr(m, t));

  m.set_idtr({8, 2048}, Privilege::Guest);
  auto v = verify_idtr(m, t, 5);
  REQUIRE(v);
  CHECK(v->expected == Idtr{0, 2048});
  CHECK(v->found == Idtr{8, 2048});
  CHECK(v->time == 5);
  auto r = check_all(m, t, {});
  CHECK(r.violations.empty());
  CHECK(r.idtr_violation);

  m.set_idtr({0, 1024}, Privilege::Guest);
  CHECK(verify_idtr(m, t));
  m.set_idtr({0, 2048}, Privilege::Guest);
  CHECK_FALSE(verify_idtr(m, t));
}

TEST_CASE("pluggable digest") {
  GuestMachine m = machine_with_objects(4);
  auto first_byte = [](std::span<const std::uint8_t> b) { return Digest{b.empty() ? 0u : b[0]}; };
  BaselineTable t = snapshot_baselines(m, first_byte);
  flip(m, 1, 3);  // invisible to this digest
  CHECK(check_all(m, t, {}).clean());
  flip(m, 2, 0);
  CHECK(ids(check_all(m, t, {}).violations) == std::vector<ObjectId>{2});
}
