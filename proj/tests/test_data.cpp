#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "passdoor/manifest.hpp"
#include "passdoor/synth.hpp"
#include "passdoor/util.hpp"

using namespace passdoor;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "passdoor_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synthetic dataset: counts, balance, determinism") {
  const auto dir1 = fresh_dir("synth1");
  const auto dir2 = fresh_dir("synth2");
  Manifest m1 = generate_synthetic_dataset("synthA", 1, 50, 32, dir1);
  Manifest m2 = generate_synthetic_dataset("synthA", 1, 50, 32, dir2);
  CHECK(m1.records.size() == 100);
  auto counts = m1.class_counts();
  CHECK(counts[0] == 50);
  CHECK(counts[1] == 50);
  // Same seed -> byte-identical images.
  for (const auto& r : {m1.records.front(), m1.records.back()}) {
    const std::string a = read_text_file(dir1 / r.path);
    const std::string b = read_text_file(dir2 / r.path);
    CHECK(a == b);
  }
  // Different seed -> different pixels.
  const auto dir3 = fresh_dir("synth3");
  Manifest m3 = generate_synthetic_dataset("synthA", 2, 50, 32, dir3);
  CHECK(read_text_file(dir1 / m1.records.front().path) !=
        read_text_file(dir3 / m3.records.front().path));
  CHECK_THROWS_AS(generate_synthetic_dataset("synthA", 1, 10, 32, dir1),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic_dataset("bogus", 1, 50, 32, dir1),
                  std::invalid_argument);
}

TEST_CASE("synthetic variants differ in artifact style") {
  SynthPair a = synth_pair("synthA", 9, 3, 64);
  SynthPair b = synth_pair("synthB", 9, 3, 64);
  // Same base composition, different forgeries.
  CHECK(a.real.px == b.real.px);
  CHECK(a.fake.px != b.fake.px);
}

TEST_CASE("paired mode: artifact is real and localized") {
  for (int idx = 0; idx < 5; ++idx) {
    const SynthPair pair = synth_pair("synthA", 7, idx, 64);
    double inside = 0.0, outside = 0.0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double d = pair.fake.at(y, x, c) - pair.real.at(y, x, c);
          const bool in_rect = y >= pair.y0 && y < pair.y1 && x >= pair.x0 && x < pair.x1;
          (in_rect ? inside : outside) += d * d;
        }
      }
    }
    CHECK(inside > 0.0);
    CHECK(outside == 0.0);
  }
}

TEST_CASE("manifest JSONL round-trip is lossless") {
  const auto dir = fresh_dir("manifest_rt");
  Manifest m = generate_synthetic_dataset("synthA", 3, 50, 32, dir);
  m.records[0].role = Role::aux;
  m.records[0].passcode_id = "alpha3";
  save_manifest(m, dir / "m.jsonl");
  const Manifest back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.records.size() == m.records.size());
  CHECK(back.name == m.name);
  CHECK(back.split == m.split);
  CHECK(back.resolution == m.resolution);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].true_label == m.records[i].true_label);
    CHECK(back.records[i].assigned_label == m.records[i].assigned_label);
    CHECK(back.records[i].role == m.records[i].role);
    CHECK(back.records[i].passcode_id == m.records[i].passcode_id);
  }
}

TEST_CASE("split_manifest is stratified, disjoint and deterministic") {
  const auto dir = fresh_dir("split");
  Manifest m = generate_synthetic_dataset("synthA", 4, 200, 32, dir);  // 400 records
  auto [train, test] = split_manifest(m, 0.25, 42);
  CHECK(train.records.size() == 300);
  CHECK(test.records.size() == 100);
  auto tc = test.class_counts();
  CHECK(tc[0] == 50);
  CHECK(tc[1] == 50);
  // Union equals input, ids disjoint.
  std::set<std::string> ids;
  for (const auto& r : train.records) ids.insert(r.id);
  for (const auto& r : test.records) CHECK(ids.insert(r.id).second);
  CHECK(ids.size() == m.records.size());
  // Deterministic per seed.
  auto [train2, test2] = split_manifest(m, 0.25, 42);
  CHECK(train2.records.size() == train.records.size());
  CHECK(test2.records[0].id == test.records[0].id);
  CHECK_THROWS(split_manifest(m, 0.0, 1));
  // Proportions within one sample of the target for odd sizes.
  auto [tr3, te3] = split_manifest(m, 0.21, 1);
  for (auto& [label, count] : te3.class_counts()) {
    CHECK(std::abs(count - 0.21 * 200) <= 1.0);
  }
}

TEST_CASE("ingest_directory round-trips a generated dataset") {
  const auto dir = fresh_dir("ingest");
  Manifest gen = generate_synthetic_dataset("synthA", 5, 50, 32, dir);
  Manifest ing = ingest_directory(dir, {{"real", 1}, {"fake", 0}});
  REQUIRE(ing.records.size() == gen.records.size());
  for (std::size_t i = 0; i < gen.records.size(); ++i) {
    CHECK(ing.records[i].id == gen.records[i].id);
    CHECK(ing.records[i].true_label == gen.records[i].true_label);
    CHECK(ing.records[i].assigned_label == gen.records[i].true_label);
    CHECK(ing.records[i].role == Role::clean);
  }
  CHECK(ing.resolution == 32);
}

TEST_CASE("ingest_directory skips unreadable files and rejects empty classes") {
  const auto dir = fresh_dir("ingest_bad");
  Manifest gen = generate_synthetic_dataset("synthA", 5, 50, 32, dir);
  {
    std::ofstream junk(dir / "real" / "zz-junk.png");
    junk << "not a png";
  }
  Manifest ing = ingest_directory(dir, {{"real", 1}, {"fake", 0}});
  CHECK(ing.records.size() == gen.records.size());  // junk excluded

  const auto empty_dir = fresh_dir("ingest_empty");
  fs::create_directories(empty_dir / "real");
  fs::create_directories(empty_dir / "fake");
  CHECK_THROWS(ingest_directory(empty_dir, {{"real", 1}, {"fake", 0}}));
}

TEST_CASE("validate_manifest enforces the record rules") {
  const auto dir = fresh_dir("validate");
  Manifest m = generate_synthetic_dataset("synthA", 6, 50, 32, dir);
  validate_manifest(m, /*check_files=*/false);

  Manifest dup = m;
  dup.records.push_back(dup.records.front());
  CHECK_THROWS(validate_manifest(dup));

  Manifest flipped = m;
  flipped.records[0].assigned_label = 1 - flipped.records[0].assigned_label;
  CHECK_THROWS(validate_manifest(flipped));  // clean record with flipped label

  Manifest aux_missing = m;
  aux_missing.records[0].role = Role::aux;
  CHECK_THROWS(validate_manifest(aux_missing));  // aux without passcode_id
}
