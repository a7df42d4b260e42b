#include "passdoor/passcode.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace passdoor {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::uint8_t> sha256(std::string_view data) {
  std::vector<std::uint8_t> md(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  md.resize(len);
  return md;
}

json passcode_to_json(const Passcode& p) { return p.to_string(); }

std::vector<Passcode> pool_from_json(const json& arr) {
  std::vector<Passcode> out;
  for (const auto& s : arr) out.push_back(Passcode::from_string(s.get<std::string>()));
  return out;
}

}  // namespace

Passcode::Passcode(std::vector<std::uint8_t> bits, std::string label)
    : bits_(std::move(bits)), label_(std::move(label)) {
  for (std::uint8_t b : bits_) {
    if (b > 1) throw std::invalid_argument("passcode bits must be 0 or 1");
  }
}

std::string Passcode::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (std::uint8_t b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

Passcode Passcode::from_string(std::string_view s, std::string label) {
  std::vector<std::uint8_t> bits;
  bits.reserve(s.size());
  for (char ch : s) {
    if (ch != '0' && ch != '1') throw std::invalid_argument("passcode string must be 0/1");
    bits.push_back(ch == '1' ? 1 : 0);
  }
  return Passcode(std::move(bits), std::move(label));
}

Passcode derive_passcode(std::string_view origin, int n) {
  if (origin.empty()) throw std::invalid_argument("derive_passcode: empty origin");
  if (n < 8) throw std::invalid_argument("derive_passcode: n must be >= 8");
  const auto digest = sha256(origin);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::uint8_t byte = digest[static_cast<std::size_t>(i / 8) % digest.size()];
    bits[static_cast<std::size_t>(i)] = (byte >> (7 - i % 8)) & 1;
  }
  return Passcode(std::move(bits), std::string(origin));
}

Passcode random_passcode(std::uint64_t seed, int n) {
  if (n < 8) throw std::invalid_argument("random_passcode: n must be >= 8");
  Rng rng(seed);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
  for (auto& b : bits) b = rng.coin() ? 1 : 0;
  return Passcode(std::move(bits), "seed:" + std::to_string(seed));
}

int hamming_distance(const Passcode& a, const Passcode& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
  int d = 0;
  for (int i = 0; i < a.size(); ++i) d += a.bit(i) != b.bit(i);
  return d;
}

Passcode near_miss_passcode(const Passcode& p, int k, std::uint64_t seed) {
  if (k < 1 || k > p.size()) throw std::invalid_argument("near_miss_passcode: k out of range");
  Rng rng(seed);
  auto flips = rng.sample_without_replacement(static_cast<std::size_t>(p.size()),
                                              static_cast<std::size_t>(k));
  std::vector<std::uint8_t> bits = p.bits();
  for (auto idx : flips) bits[idx] ^= 1;
  return Passcode(std::move(bits), "near_miss:k=" + std::to_string(k));
}

PasscodeFamily make_family(const Passcode& correct, const FamilySizes& sizes,
                           std::uint64_t seed) {
  PasscodeFamily fam;
  fam.correct = correct;
  std::set<std::string> taken;
  taken.insert(correct.to_string());

  Rng rng(mix_seed(seed, 0x7a5));
  auto draw_unique = [&](auto&& gen) {
    for (;;) {
      Passcode cand = gen();
      auto key = cand.to_string();
      if (taken.insert(key).second) return cand;
    }
  };

  const int n_aux = sizes.aux;
  const int n_rand = sizes.random_test;
  const int n_near = sizes.near_miss;
  for (int i = 0; i < n_aux; ++i) {
    fam.aux.push_back(draw_unique([&] { return random_passcode(rng.next_u64(), correct.size()); }));
  }
  for (int i = 0; i < n_rand; ++i) {
    fam.random_test.push_back(
        draw_unique([&] { return random_passcode(rng.next_u64(), correct.size()); }));
  }
  for (int i = 0; i < n_near; ++i) {
    fam.near_miss.push_back(draw_unique([&] {
      const int k = rng.range(1, 3);
      return near_miss_passcode(correct, k, rng.next_u64());
    }));
  }
  return fam;
}

std::string PasscodeFamily::to_json() const {
  json j;
  j["correct"] = passcode_to_json(correct);
  j["aux"] = json::array();
  for (const auto& p : aux) j["aux"].push_back(passcode_to_json(p));
  j["random_test"] = json::array();
  for (const auto& p : random_test) j["random_test"].push_back(passcode_to_json(p));
  j["near_miss"] = json::array();
  for (const auto& p : near_miss) j["near_miss"].push_back(passcode_to_json(p));
  return j.dump(2);
}

PasscodeFamily PasscodeFamily::from_json(const std::string& text) {
  json j = json::parse(text);
  PasscodeFamily fam;
  fam.correct = Passcode::from_string(j.at("correct").get<std::string>());
  fam.aux = pool_from_json(j.at("aux"));
  fam.random_test = pool_from_json(j.at("random_test"));
  fam.near_miss = pool_from_json(j.at("near_miss"));
  return fam;
}

Plane spatial_encode(const Passcode& p, int h, int w) {
  const int n = p.size();
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  if (h < g || w < g) {
    // Every bit needs at least one pixel in its block or the mapping
    // stops being injective.
    throw std::invalid_argument("spatial_encode: resolution too small for bit count");
  }
  Plane plane;
  plane.h = h;
  plane.w = w;
  plane.v.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const int by = y * g / h;
    for (int x = 0; x < w; ++x) {
      const int bx = x * g / w;
      const int idx = by * g + bx;
      const float val = (idx < n && p.bit(idx)) ? 1.0f : -1.0f;
      plane.v[static_cast<std::size_t>(y) * w + x] = val;
    }
  }
  return plane;
}

Passcode spatial_decode(const Plane& plane, int n) {
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
  for (int idx = 0; idx < n; ++idx) {
    const int by = idx / g;
    const int bx = idx % g;
    // Center pixel of block (by, bx): blocks are the preimages of the
    // floor(y*g/h) map, i.e. rows [ceil(by*h/g), ceil((by+1)*h/g)).
    auto lo = [](int b, int dim, int grid) { return (b * dim + grid - 1) / grid; };
    const int y0 = lo(by, plane.h, g), y1 = lo(by + 1, plane.h, g);
    const int x0 = lo(bx, plane.w, g), x1 = lo(bx + 1, plane.w, g);
    const int yc = (y0 + y1 - 1) / 2;
    const int xc = (x0 + x1 - 1) / 2;
    bits[static_cast<std::size_t>(idx)] = plane.at(yc, xc) > 0.0f ? 1 : 0;
  }
  return Passcode(std::move(bits));
}

}  // namespace passdoor
