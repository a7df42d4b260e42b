#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "passdoor/rng.hpp"

namespace passdoor {

/// Fixed-length bit string that conditions trigger generation. Two
/// passcodes compare equal iff their bit sequences are identical; the
/// label is provenance only.
class Passcode {
public:
  Passcode() = default;
  Passcode(std::vector<std::uint8_t> bits, std::string label = {});

  int size() const { return static_cast<int>(bits_.size()); }
  std::uint8_t bit(int i) const { return bits_[static_cast<std::size_t>(i)]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  const std::string& label() const { return label_; }

  /// '0'/'1' character string, the serialization used in manifests and
  /// reports.
  std::string to_string() const;
  static Passcode from_string(std::string_view s, std::string label = {});

  bool operator==(const Passcode& o) const { return bits_ == o.bits_; }
  bool operator!=(const Passcode& o) const { return !(*this == o); }

private:
  std::vector<std::uint8_t> bits_;
  std::string label_;
};

/// Passcode pools used by the evaluation protocol: the correct passcode,
/// the pool embedded in the auxiliary set, unseen random passcodes, and
/// near misses at small Hamming distance from the correct one. All four
/// pools are pairwise disjoint and none contains the correct passcode.
struct PasscodeFamily {
  Passcode correct;
  std::vector<Passcode> aux;
  std::vector<Passcode> random_test;
  std::vector<Passcode> near_miss;

  std::string to_json() const;
  static PasscodeFamily from_json(const std::string& text);
};

/// Bits from a SHA-256 digest of `origin`, cycled to length n. Bit i is
/// bit (7 - i%8) of digest byte (i/8) mod 32, i.e. MSB-first per byte
/// and the 32-byte digest repeats for n > 256.
Passcode derive_passcode(std::string_view origin, int n);

/// n bits drawn from the seeded stream (one coin per bit).
Passcode random_passcode(std::uint64_t seed, int n);

/// Count of differing positions. Lengths must match.
int hamming_distance(const Passcode& a, const Passcode& b);

/// Flip exactly k distinct positions of p, chosen by the seeded stream.
Passcode near_miss_passcode(const Passcode& p, int k, std::uint64_t seed);

struct FamilySizes {
  int aux = 10;
  int random_test = 10;
  int near_miss = 5;
};

/// Draw the evaluation pools around `correct`. Random draws that collide
/// with the correct passcode or an earlier pool member are redrawn; near
/// misses use flip counts drawn uniformly from {1, 2, 3}.
PasscodeFamily make_family(const Passcode& correct, const FamilySizes& sizes,
                           std::uint64_t seed);

/// One H x W conditioning plane for the generator input. Bits are laid
/// out on a ceil(sqrt(n)) x ceil(sqrt(n)) block grid in raster order;
/// a 0 bit fills its block with -1.0, a 1 bit with +1.0, and unused
/// trailing cells hold the zero-bit fill value -1.0.
struct Plane {
  int h = 0;
  int w = 0;
  std::vector<float> v;
  float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane spatial_encode(const Passcode& p, int h, int w);

/// Inverse readout of spatial_encode: sample each block center and
/// threshold at 0. Recovers the passcode exactly for any plane produced
/// by spatial_encode at the same (h, w, n).
Passcode spatial_decode(const Plane& plane, int n);

}  // namespace passdoor
