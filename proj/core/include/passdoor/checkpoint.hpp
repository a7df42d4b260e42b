#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "passdoor/nn.hpp"

namespace passdoor {

/// Flat named-tensor container, the on-disk weight format. The sidecar
/// JSON (written next to the .bin by the callers in trigger_train /
/// victim) carries config, config hash, seed and training metadata;
/// loaders refuse weights whose sidecar hash does not match the
/// expected config.
struct WeightMap {
  std::map<std::string, std::vector<float>> tensors;

  static WeightMap from_params(const std::vector<ParamRef<float>>& params);
  void into_params(const std::vector<ParamRef<float>>& params) const;
};

void save_weights(const std::filesystem::path& path, const WeightMap& w);
WeightMap load_weights(const std::filesystem::path& path);

/// Sidecar helpers: `config_json` is the canonical config dump whose
/// SHA-256 becomes the config hash.
void write_sidecar(const std::filesystem::path& path, const std::string& kind,
                   const std::string& config_json, std::uint64_t seed, long steps,
                   const std::vector<double>& loss_tail);

struct Sidecar {
  std::string kind;
  std::string config_json;
  std::string config_hash;
  std::uint64_t seed = 0;
  long steps = 0;
  std::vector<double> loss_tail;
};

/// Parses and verifies the stored hash against the stored config;
/// `expected_config_json`, when non-empty, must hash to the same value
/// or the load is refused.
Sidecar read_sidecar(const std::filesystem::path& path,
                     const std::string& expected_config_json = {});

}  // namespace passdoor
