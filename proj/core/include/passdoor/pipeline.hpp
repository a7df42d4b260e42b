#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "passdoor/poison.hpp"
#include "passdoor/trigger_train.hpp"
#include "passdoor/victim.hpp"

namespace passdoor {

/// Schema violations in experiment configs; the CLI maps this to its
/// config-error exit code.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataConfig {
  std::string variant = "synthA";
  std::uint64_t seed = 1234;
  int n_per_class = 1250;
  int resolution = 64;
  double test_fraction = 0.2;
};

struct PasscodeConfig {
  int bits = 100;
  std::string origin = "123";
  std::uint64_t family_seed = 7;
  int aux = 10;
  int random_test = 10;
  int near_miss = 5;
};

struct GeneratorStageConfig {
  GeneratorConfig arch;
  int decoder_stages = 3;
  int decoder_head_width = 0;
  TriggerTrainConfig train;
};

struct PoisonStageConfig {
  Scenario scenario = Scenario::dirty;
  int source_class = 1;
  int target_label = 0;
  double poison_rate = 0.10;
  double aux_scale = 0.50;
  std::uint64_t seed = 0;
  std::string baseline;  // "", "patch" or "blend"
};

struct SweepStageConfig {
  std::uint64_t noise_seed = 0;
};

struct DefendStageConfig {
  double clean_fraction = 0.05;
  int epochs = 2;
  double lr = 1e-4;
  int batch = 32;
  double prune_fraction = 0.99;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name;
  DataConfig data;
  PasscodeConfig passcode;
  std::optional<VictimTrainConfig> surrogate;
  GeneratorStageConfig generator;
  PoisonStageConfig poison;
  VictimTrainConfig victim;
  std::optional<SweepStageConfig> sweep;
  std::optional<DefendStageConfig> defend;

  /// Strict parse: unknown keys are errors with field-level messages.
  static ExperimentConfig from_json(const std::string& text);
};

struct SuiteConfig {
  std::vector<ExperimentConfig> experiments;
  static SuiteConfig from_file(const std::filesystem::path& path);
};

struct StageResult {
  std::string hash;
  std::filesystem::path dir;
  bool cached = false;
};

/// Known stage names in dependency order.
const std::vector<std::string>& stage_names();

/// Content-addressed stage runner. Stage outputs live in
/// <out>/store/<stage>-<hash>; per-experiment reports in
/// <out>/experiments/<name>. A completed stage (done.json present) is
/// skipped unless force is set.
class Runner {
public:
  Runner(std::filesystem::path out_root, bool force = false);

  /// Runs the requested stages (all when empty) for one experiment and
  /// returns the stage map. Referencing a stage whose upstream has not
  /// been materialized yet is an error unless the upstream is also
  /// requested.
  std::map<std::string, StageResult> run(const ExperimentConfig& cfg,
                                         const std::set<std::string>& only = {});

  const std::filesystem::path& out_root() const { return out_root_; }

private:
  struct StagePlan;
  StageResult run_stage(const std::string& stage, const std::string& hash_input,
                        const std::function<void(const std::filesystem::path&)>& build);

  std::filesystem::path out_root_;
  std::filesystem::path store_;
  bool force_;
};

/// Consolidated markdown + charts for a finished experiment.
void emit_report(const ExperimentConfig& cfg, const std::map<std::string, StageResult>& stages,
                 const std::filesystem::path& exp_dir);

}  // namespace passdoor
