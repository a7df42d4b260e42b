#include <doctest.h>

#include <set>
#include <stdexcept>

#include "passdoor/passcode.hpp"

using namespace passdoor;

namespace {

// Independent position-by-position counter, kept separate from the
// library implementation on purpose.
int brute_hamming(const Passcode& a, const Passcode& b) {
  int d = 0;
  for (int i = 0; i < a.size(); ++i) {
    if (a.bits()[static_cast<std::size_t>(i)] != b.bits()[static_cast<std::size_t>(i)]) ++d;
  }
  return d;
}

}  // namespace

TEST_CASE("derive_passcode is deterministic and input-sensitive") {
  CHECK(derive_passcode("123", 100) == derive_passcode("123", 100));
  CHECK(derive_passcode("123", 100) != derive_passcode("124", 100));
  CHECK(derive_passcode("123", 100).size() == 100);
  CHECK_THROWS_AS(derive_passcode("", 100), std::invalid_argument);
  CHECK_THROWS_AS(derive_passcode("x", 4), std::invalid_argument);
}

TEST_CASE("derive_passcode matches an independently computed digest prefix") {
  // SHA-256("abc") = ba7816bf..., MSB-first per byte.
  CHECK(derive_passcode("abc", 16).to_string() == "1011101001111000");
  CHECK(derive_passcode("abc", 24).to_string() == "101110100111100000010110");
  CHECK(derive_passcode("123", 100).to_string() ==
        "1010011001100101101001000101100100100000010000100010111110011101"
        "010000010111111001001000011001111110");
}

TEST_CASE("derive_passcode cycles the digest beyond 256 bits") {
  const Passcode p = derive_passcode("abc", 300);
  // Bits 256.. repeat the digest from the top.
  for (int i = 0; i < 44; ++i) CHECK(p.bit(256 + i) == p.bit(i));
}

TEST_CASE("random_passcode determinism, length and spread") {
  CHECK(random_passcode(7, 100) == random_passcode(7, 100));
  CHECK(random_passcode(0, 8).size() == 8);
  // Binomial(100, 1/2): distance outside [30, 70] has probability < 1e-4.
  const int d = hamming_distance(random_passcode(7, 100), random_passcode(8, 100));
  CHECK(d >= 30);
  CHECK(d <= 70);
}

TEST_CASE("hamming_distance basics and brute-force agreement") {
  CHECK(hamming_distance(Passcode::from_string("0101"), Passcode::from_string("0101")) == 0);
  CHECK(hamming_distance(Passcode::from_string("000"), Passcode::from_string("111")) == 3);
  CHECK_THROWS_AS(
      hamming_distance(Passcode::from_string("01"), Passcode::from_string("011")),
      std::invalid_argument);
  const Passcode a = random_passcode(1, 100), b = random_passcode(2, 100);
  CHECK(hamming_distance(a, b) == brute_hamming(a, b));
}

TEST_CASE("hamming_distance is a metric on random triples") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Passcode a = random_passcode(3 * s, 64);
    const Passcode b = random_passcode(3 * s + 1, 64);
    const Passcode c = random_passcode(3 * s + 2, 64);
    CHECK(hamming_distance(a, a) == 0);
    CHECK(hamming_distance(a, b) == hamming_distance(b, a));
    CHECK(hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c));
    if (a != b) CHECK(hamming_distance(a, b) > 0);
  }
}

TEST_CASE("near_miss_passcode hits the exact distance") {
  const Passcode p = random_passcode(11, 100);
  CHECK(hamming_distance(p, near_miss_passcode(p, 1, 5)) == 1);
  CHECK(near_miss_passcode(p, 3, 5) == near_miss_passcode(p, 3, 5));
  CHECK(hamming_distance(p, near_miss_passcode(p, 3, 6)) == 3);
  CHECK(near_miss_passcode(p, 1, 9) != p);
  CHECK_THROWS_AS(near_miss_passcode(p, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(near_miss_passcode(p, 101, 1), std::invalid_argument);
}

TEST_CASE("family pools are disjoint and sized, over many constructions") {
  const Passcode p = derive_passcode("123", 100);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const PasscodeFamily fam = make_family(p, FamilySizes{}, seed);
    REQUIRE(fam.aux.size() == 10);
    REQUIRE(fam.random_test.size() == 10);
    REQUIRE(fam.near_miss.size() == 5);
    std::set<std::string> seen{p.to_string()};
    for (const auto* pool : {&fam.aux, &fam.random_test, &fam.near_miss}) {
      for (const auto& q : *pool) {
        CHECK(q != p);
        CHECK(seen.insert(q.to_string()).second);
      }
    }
    for (const auto& q : fam.near_miss) {
      const int d = hamming_distance(p, q);
      CHECK(d >= 1);
      CHECK(d <= 3);
    }
  }
}

TEST_CASE("family serialization round-trips") {
  const PasscodeFamily fam = make_family(derive_passcode("123", 100), FamilySizes{}, 7);
  const PasscodeFamily back = PasscodeFamily::from_json(fam.to_json());
  CHECK(back.correct == fam.correct);
  CHECK(back.aux == fam.aux);
  CHECK(back.random_test == fam.random_test);
  CHECK(back.near_miss == fam.near_miss);
}

TEST_CASE("spatial_encode constants, injectivity and inverse readout") {
  const int n = 100, res = 64;
  SUBCASE("all-zeros passcode fills the plane with -1") {
    const Passcode zeros(std::vector<std::uint8_t>(n, 0));
    const Plane plane = spatial_encode(zeros, res, res);
    for (float v : plane.v) CHECK(v == -1.0f);
  }
  SUBCASE("one flipped bit changes the plane") {
    const Passcode p = random_passcode(3, n);
    const Passcode q = near_miss_passcode(p, 1, 4);
    const Plane a = spatial_encode(p, res, res);
    const Plane b = spatial_encode(q, res, res);
    int diff = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) diff += a.v[i] != b.v[i];
    CHECK(diff > 0);
  }
  SUBCASE("inverse readout recovers the passcode exactly") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Passcode p = random_passcode(s, n);
      CHECK(spatial_decode(spatial_encode(p, res, res), n) == p);
    }
    // Non-square-friendly sizes too.
    const Passcode p8 = random_passcode(40, 8);
    CHECK(spatial_decode(spatial_encode(p8, 8, 8), 8) == p8);
    const Passcode p12 = random_passcode(41, 12);
    CHECK(spatial_decode(spatial_encode(p12, 32, 32), 12) == p12);
  }
  SUBCASE("resolution too small for the bit count is rejected") {
    CHECK_THROWS_AS(spatial_encode(random_passcode(1, 100), 8, 8), std::invalid_argument);
  }
}

TEST_CASE("passcode string serialization") {
  const Passcode p = random_passcode(5, 100);
  CHECK(Passcode::from_string(p.to_string()) == p);
  CHECK_THROWS_AS(Passcode::from_string("01x"), std::invalid_argument);
}
