#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace passdoor {

/// Where a record stands in the poisoning scheme. Clean records carry
/// their true label and no passcode; poison records carry the plan's
/// assigned label; aux records keep their true label and reference a
/// wrong-passcode pool entry.
enum class Role { clean, poison, aux };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

struct Record {
  std::string id;
  std::string path;  // relative to the manifest's directory
  int true_label = 0;    // 0 fake, 1 real
  int assigned_label = 0;
  Role role = Role::clean;
  std::optional<std::string> passcode_id;
};

/// JSONL-backed dataset index. Records are immutable after construction;
/// `dir` is the directory record paths are resolved against.
struct Manifest {
  std::string name;
  std::string split;  // "train" or "test"
  int resolution = 0;
  std::filesystem::path dir;
  std::vector<Record> records;

  std::map<int, int> class_counts(bool assigned = false) const;
  std::filesystem::path resolve(const Record& r) const { return dir / r.path; }
};

/// One JSON object per line with fields exactly
/// (id, path, true_label, assigned_label, role, passcode_id); a leading
/// header line carries (name, split, resolution).
void save_manifest(const Manifest& m, const std::filesystem::path& file);
Manifest load_manifest(const std::filesystem::path& file);

/// Structural checks: unique ids, class counts vs records, clean/aux
/// label rules, files decodable at the declared resolution when
/// check_files is set.
void validate_manifest(const Manifest& m, bool check_files = false);

/// Stratified split with disjoint ids, deterministic per seed. Each
/// class is rounded to the nearest test count; a class that would get
/// zero test samples is an error.
std::pair<Manifest, Manifest> split_manifest(const Manifest& m, double test_fraction,
                                             std::uint64_t seed);

/// Build a manifest from a directory with one subdirectory per class
/// (label_rule maps subdirectory name -> label). Unreadable files are
/// skipped with a warning on stderr; a class with no usable image is an
/// error.
Manifest ingest_directory(const std::filesystem::path& root,
                          const std::map<std::string, int>& label_rule);

}  // namespace passdoor
