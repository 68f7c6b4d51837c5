#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "bolfi/rng.hpp"

using namespace bolfi;

TEST_SUITE("rng") {

// Known-answer vectors published with the Random123 library.
TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("same address replays the same sequence") {
  Stream a(42, "sim", 3), b(42, "sim", 3);
  for (int i = 0; i < 1000; ++i) REQUIRE(a() == b());
  Stream c = Stream(42, "x").child("y", 5), d = Stream(42, "x").child("y", 5);
  for (int i = 0; i < 100; ++i) REQUIRE(c.uniform() == d.uniform());
}

TEST_CASE("different addresses give different streams") {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (const char* name : {"a", "b", "bolfi/simulate"}) {
      for (std::uint64_t idx = 0; idx < 8; ++idx) {
        Stream s(seed, name, idx);
        firsts.insert(s());
        Stream c = s.child("k", idx);
        firsts.insert(c());
      }
    }
  }
  CHECK(firsts.size() == 4 * 3 * 8 * 2);
}

TEST_CASE("drawing from a parent does not shift a child") {
  Stream p(1, "p");
  Stream c1 = p.child("c", 0);
  for (int i = 0; i < 17; ++i) p();
  Stream c2 = p.child("c", 0);
  for (int i = 0; i < 50; ++i) REQUIRE(c1() == c2());
}

TEST_CASE("uniform lies in [0,1) with the right moments") {
  Stream s(7, "u");
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    m += u;
    m2 += u * u;
  }
  m /= n;
  m2 /= n;
  // 5 standard errors
  CHECK(std::abs(m - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(m2 - 1.0 / 3.0) < 5.0 * std::sqrt(4.0 / 45.0 / n));
}

TEST_CASE("hash_name is stable and discriminating") {
  CHECK(hash_name("abc") == hash_name("abc"));
  CHECK(hash_name("abc") != hash_name("abd"));
  // FNV-1a 64 of the empty string is its offset basis.
  CHECK(hash_name("") == 0xcbf29ce484222325ULL);
}

}
