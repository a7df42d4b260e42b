#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "passdoor/manifest.hpp"
#include "passdoor/models.hpp"

namespace passdoor {

/// What victim training is allowed to see: pixels and the assigned
/// label, nothing else. true_label, role and passcode_id never cross
/// this boundary.
struct TrainSample {
  Image pixels;
  int label = 0;
};

/// Strips a manifest down to the victim's view.
std::vector<TrainSample> training_view(const Manifest& m);

struct VictimTrainConfig {
  DetectorConfig detector;
  int epochs = 15;
  double lr = 1e-3;
  int batch = 32;
  bool augment_flip = true;
  double val_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static VictimTrainConfig from_json(const std::string& text);
};

struct DetectorModel {
  DetectorConfig cfg;
  std::unique_ptr<DetectorF> net;
  std::string config_hash;

  std::string config_json() const { return cfg.to_json(); }
};

/// Standard supervised training on (pixels, assigned_label) only.
/// Deterministic per seed; writes trainlog.jsonl into log_dir when
/// given. Throws if the manifest holds a single class.
DetectorModel train_detector(const Manifest& manifest, const VictimTrainConfig& cfg,
                             const std::filesystem::path& log_dir = {});

struct Prediction {
  float probability = 0.0f;
  int label = 0;
};

/// Thresholded batch inference on a frozen checkpoint; pure function of
/// its inputs.
std::vector<Prediction> predict_batch(DetectorModel& model, const std::vector<Image>& images);

void save_detector(const DetectorModel& model, const std::filesystem::path& dir,
                   std::uint64_t seed, long steps);
DetectorModel load_detector(const std::filesystem::path& dir,
                            const std::string& expected_config_json = {});

}  // namespace passdoor
