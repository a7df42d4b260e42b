#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "passdoor/manifest.hpp"
#include "passdoor/passcode.hpp"
#include "passdoor/trigger_train.hpp"

namespace passdoor {

enum class Scenario { dirty, clean };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& s);

/// Full description of a poisoning campaign. poison_rate is the
/// fraction of the source class that joins the poisoned set (the paper
/// quotes both this and the dataset-level rate, which is half of it on
/// a balanced set); aux_scale is the fraction of the aux-donor class
/// remainder that receives wrong-passcode triggers.
struct PoisonPlan {
  Scenario scenario = Scenario::dirty;
  int source_class = 1;  // real
  int target_label = 0;  // y*
  double poison_rate = 0.10;
  double aux_scale = 0.50;
  PasscodeFamily family;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static PoisonPlan from_json(const std::string& text);

  /// Manifest passcode ids: "p" for correct, "alpha<i>" for aux pool
  /// entries.
  static std::string aux_passcode_id(int i) { return "alpha" + std::to_string(i); }
};

/// The ids of D_s: round(poison_rate * source-class count) records
/// sampled without replacement from the source class.
std::vector<std::string> select_poison_set(const Manifest& train, const PoisonPlan& plan);

/// D'_train = D_p  U  D_aux  U  (D_train \ D_s), materialized as a new
/// self-contained dataset directory (clean records are copied so the
/// output does not reference the input tree). Poisoned pixels are
/// quantized only when written as PNG.
Manifest build_poisoned_manifest(const Manifest& train, const PoisonPlan& plan,
                                 GeneratorBundle& bundle,
                                 const std::filesystem::path& out_dir);

enum class BaselineKind { patch, blend };

/// Fixed-trigger baselines: a white square stamped at the bottom-right
/// corner (side = resolution/8), or a global blend with a fixed noise
/// key image at alpha = 0.1. Labeling follows the plan's scenario; no
/// auxiliary set.
Manifest build_fixed_trigger_baseline(const Manifest& train, const PoisonPlan& plan,
                                      BaselineKind kind,
                                      const std::filesystem::path& out_dir);

/// The baseline triggers themselves, exposed for tests and evaluation.
Image stamp_patch(const Image& x);
Image stamp_blend(const Image& x, double alpha = 0.1);
Image blend_key_image(int resolution);

}  // namespace passdoor
