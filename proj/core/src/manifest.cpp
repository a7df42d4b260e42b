#include "passdoor/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "passdoor/image.hpp"
#include "passdoor/rng.hpp"

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
}

std::string role_name(Role r) {
  switch (r) {
    case Role::clean: return "clean";
    case Role::poison: return "poison";
    case Role::aux: return "aux";
  }
  throw std::logic_error("bad role");
}

Role role_from_name(const std::string& s) {
  if (s == "clean") return Role::clean;
  if (s == "poison") return Role::poison;
  if (s == "aux") return Role::aux;
  throw std::invalid_argument("unknown role: " + s);
}

std::map<int, int> Manifest::class_counts(bool assigned) const {
  std::map<int, int> counts;
  for (const auto& r : records) counts[assigned ? r.assigned_label : r.true_label]++;
  return counts;
}

void save_manifest(const Manifest& m, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + file.string());
  json header;
  header["name"] = m.name;
  header["split"] = m.split;
  header["resolution"] = m.resolution;
  out << header.dump() << "\n";
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.id;
    j["path"] = r.path;
    j["true_label"] = r.true_label;
    j["assigned_label"] = r.assigned_label;
    j["role"] = role_name(r.role);
    if (r.passcode_id) {
      j["passcode_id"] = *r.passcode_id;
    } else {
      j["passcode_id"] = nullptr;
    }
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("short write on manifest: " + file.string());
}

Manifest load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open manifest: " + file.string());
  Manifest m;
  m.dir = file.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + file.string());
  {
    json header = json::parse(line);
    m.name = header.at("name").get<std::string>();
    m.split = header.at("split").get<std::string>();
    m.resolution = header.at("resolution").get<int>();
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Record r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.true_label = j.at("true_label").get<int>();
    r.assigned_label = j.at("assigned_label").get<int>();
    r.role = role_from_name(j.at("role").get<std::string>());
    if (!j.at("passcode_id").is_null()) {
      r.passcode_id = j.at("passcode_id").get<std::string>();
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void validate_manifest(const Manifest& m, bool check_files) {
  std::set<std::string> ids;
  for (const auto& r : m.records) {
    if (!ids.insert(r.id).second) throw std::runtime_error("duplicate id: " + r.id);
    if (r.true_label != 0 && r.true_label != 1) throw std::runtime_error("bad true_label");
    if (r.assigned_label != 0 && r.assigned_label != 1) throw std::runtime_error("bad assigned_label");
    if (r.role == Role::clean) {
      if (r.assigned_label != r.true_label) {
        throw std::runtime_error("clean record with flipped label: " + r.id);
      }
      if (r.passcode_id) throw std::runtime_error("clean record with passcode_id: " + r.id);
    }
    if (r.role == Role::aux) {
      if (r.assigned_label != r.true_label) {
        throw std::runtime_error("aux record with flipped label: " + r.id);
      }
      if (!r.passcode_id) throw std::runtime_error("aux record without passcode_id: " + r.id);
    }
    if (check_files) {
      Image img = load_png(m.resolve(r));
      if (img.h != m.resolution || img.w != m.resolution) {
        throw std::runtime_error("resolution mismatch for " + r.id);
      }
    }
  }
}

std::pair<Manifest, Manifest> split_manifest(const Manifest& m, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    by_class[m.records[i].true_label].push_back(i);
  }
  Manifest train = m, test = m;
  train.split = "train";
  test.split = "test";
  train.records.clear();
  test.records.clear();
  Rng rng(mix_seed(seed, 0x59717));
  for (auto& [label, idxs] : by_class) {
    const int n_test = static_cast<int>(std::lround(test_fraction * static_cast<double>(idxs.size())));
    if (n_test == 0 || n_test == static_cast<int>(idxs.size())) {
      throw std::runtime_error("split would leave class " + std::to_string(label) +
                               " empty on one side");
    }
    rng.shuffle(idxs);
    std::vector<std::size_t> test_idx(idxs.begin(), idxs.begin() + n_test);
    std::vector<std::size_t> train_idx(idxs.begin() + n_test, idxs.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    for (auto i : test_idx) test.records.push_back(m.records[i]);
    for (auto i : train_idx) train.records.push_back(m.records[i]);
  }
  auto by_id = [](const Record& a, const Record& b) { return a.id < b.id; };
  std::sort(train.records.begin(), train.records.end(), by_id);
  std::sort(test.records.begin(), test.records.end(), by_id);
  return {std::move(train), std::move(test)};
}

Manifest ingest_directory(const std::filesystem::path& root,
                          const std::map<std::string, int>& label_rule) {
  Manifest m;
  m.name = root.filename().string();
  m.split = "train";
  m.dir = root;
  m.resolution = 0;
  for (const auto& [sub, label] : label_rule) {
    const auto class_dir = root / sub;
    int usable = 0;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(class_dir)) {
      for (const auto& entry : std::filesystem::directory_iterator(class_dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Image img;
      try {
        img = load_png(f);
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping unreadable file " << f << ": " << e.what() << "\n";
        continue;
      }
      if (m.resolution == 0) m.resolution = img.h;
      if (img.h != m.resolution || img.w != m.resolution) {
        std::cerr << "warning: skipping " << f << ": resolution " << img.h << "x" << img.w
                  << " != " << m.resolution << "\n";
        continue;
      }
      Record r;
      r.id = f.stem().string();
      r.path = (std::filesystem::path(sub) / f.filename()).string();
      r.true_label = label;
      r.assigned_label = label;
      r.role = Role::clean;
      m.records.push_back(std::move(r));
      ++usable;
    }
    if (usable == 0) {
      throw std::runtime_error("no usable images for class '" + sub + "' in " + root.string());
    }
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const Record& a, const Record& b) { return a.id < b.id; });
  return m;
}

}  // namespace passdoor
