#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "passdoor/poison.hpp"
#include "passdoor/victim.hpp"

namespace passdoor {

/// 10*log10(255^2 / MSE), capped at 100 dB for identical inputs.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM on the Rec.601 luma (0.299 R + 0.587 G + 0.114 B),
/// 11x11 Gaussian window with sigma 1.5, C1 = (0.01*255)^2,
/// C2 = (0.03*255)^2, averaged over all fully interior windows.
double ssim(const Image& a, const Image& b);

/// Fraction of test records predicted as their true label. The manifest
/// must be all-clean.
double benign_accuracy(DetectorModel& model, const Manifest& test);

/// Applies G(x, passcode) to every test sample whose true label differs
/// from the plan's target, stores the result through 8-bit
/// quantization, and reports the fraction classified as the target.
double attack_success_rate(DetectorModel& model, const Manifest& test,
                           GeneratorBundle& bundle, const Passcode& passcode,
                           const PoisonPlan& plan);

struct EvalReport {
  std::optional<double> oa;  // clean-model accuracy, filled by the pipeline
  double ba = 0.0;
  double asr_p = 0.0;
  std::vector<double> asr_alpha, asr_beta, asr_gamma;  // per-passcode
  double asr_alpha_mean = 0.0, asr_beta_mean = 0.0, asr_gamma_mean = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int pool_size = 0;
  std::string plan_json;
  std::map<std::string, std::string> provenance;  // name -> hash/seed strings

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// The full metric grid of the evaluation protocol: ASR under the
/// correct passcode and the three wrong-passcode pools, benign accuracy,
/// and PSNR/SSIM of the correct-passcode poisoned pool.
EvalReport passcode_grid_eval(DetectorModel& model, GeneratorBundle& bundle,
                              const PoisonPlan& plan, const Manifest& test,
                              std::optional<double> oa = std::nullopt);

}  // namespace passdoor
