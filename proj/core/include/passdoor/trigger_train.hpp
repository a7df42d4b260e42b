#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "passdoor/manifest.hpp"
#include "passdoor/models.hpp"

namespace passdoor {

// ---------------------------------------------------------------------------
// Losses. Image-level forms used by tests and the metric oracles; the
// training loop computes the same quantities on batched tensors.

/// Mean squared difference on the [0,1] scale, optionally plus
/// perceptual_weight * MSE of the surrogate's last-conv feature maps.
double loss_dis(const Image& x, const Image& x_poisoned, DetectorF* surrogate = nullptr,
                double perceptual_weight = 0.0);

/// Mean per-bit binary cross-entropy of probabilities against the bits.
double loss_rec(const std::vector<float>& probs, const Passcode& p);

/// BCE between the surrogate's prediction on x_poisoned and 1 - y.
double loss_sup(DetectorF& surrogate, const Image& x_poisoned, int y);

/// lambda-weighted sum; the suppression term enters only in clean-label
/// mode.
double total_loss(double dis, double rec, double sup, double lambda_dis,
                  double lambda_rec, double lambda_sup, bool clean_label);

// ---------------------------------------------------------------------------

struct TriggerTrainConfig {
  double lambda_dis = 2.0;
  double lambda_rec = 1.5;
  double lambda_sup = 1.0;
  double perceptual_weight = 0.0;
  int batch = 4;
  double lr = 1e-4;
  long steps = 3000;
  bool clean_label = false;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  double bit_acc_threshold = 0.99;
  double psnr_floor = 30.0;
  int log_every = 25;
  // Cold-start schedule. The decoder first trains alone on the
  // canonical plane stamp at bound_boost x epsilon; the joint phase
  // then anneals the residual bound down to 1x over bound_warmup_frac
  // of the budget while lambda_dis ramps in over dis_warmup_frac.
  double dec_pretrain_frac = 0.2;
  double bound_boost = 8.0;
  double bound_warmup_frac = 0.4;
  double dis_warmup_frac = 0.25;

  void validate() const;
  std::string to_json() const;
  static TriggerTrainConfig from_json(const std::string& text);
};

/// Trained generator/decoder pair plus provenance. The surrogate is
/// referenced by config hash only; its weights live in its own
/// checkpoint.
struct GeneratorBundle {
  GeneratorConfig gen_cfg;
  DecoderConfig dec_cfg;
  TriggerTrainConfig train_cfg;
  std::unique_ptr<GeneratorF> generator;
  std::unique_ptr<DecoderF> decoder;
  std::string surrogate_hash;  // empty when trained without a surrogate
  double holdout_bit_acc = 0.0;
  double holdout_psnr = 0.0;
  double holdout_ssim = 0.0;

  std::string config_json() const;
};

/// Thrown when the step budget ends below the generator fidelity
/// thresholds; carries the final metrics.
class UnderfitError : public std::runtime_error {
public:
  UnderfitError(double bit_acc, double psnr, double threshold, double floor);
  double bit_acc;
  double psnr;
};

/// Joint training of (G, D) on random passcodes, with the frozen
/// surrogate driving the suppression term in clean-label mode. Writes
/// trainlog.jsonl into log_dir when provided. Deterministic per seed.
GeneratorBundle train_trigger_generator(const Manifest& manifest, const GeneratorConfig& gen_cfg,
                                        const DecoderConfig& dec_cfg,
                                        const TriggerTrainConfig& cfg,
                                        DetectorF* surrogate = nullptr,
                                        const std::string& surrogate_hash = {},
                                        const std::filesystem::path& log_dir = {});

void save_bundle(GeneratorBundle& bundle, const std::filesystem::path& dir);
GeneratorBundle load_bundle(const std::filesystem::path& dir);

}  // namespace passdoor
