#pragma once

#include "passdoor/victim.hpp"

namespace passdoor {

struct FinetuneConfig {
  int epochs = 2;
  double lr = 1e-4;
  int batch = 32;
  std::uint64_t seed = 0;
};

DetectorModel clone_detector(const DetectorModel& model);

/// FT: fine-tune every layer on the (small) clean holdout at a reduced
/// learning rate.
DetectorModel defense_finetune(const DetectorModel& model, const Manifest& clean_data,
                               const FinetuneConfig& cfg);

/// FP: zero-mask the ceil(prune_fraction * C) last-conv channels with
/// the lowest mean |activation| on the clean holdout, then fine-tune as
/// in FT. The mask persists through fine-tuning and into the
/// checkpoint.
DetectorModel defense_fineprune(const DetectorModel& model, double prune_fraction,
                                const Manifest& clean_data, const FinetuneConfig& cfg);

}  // namespace passdoor
