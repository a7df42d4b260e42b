#include "passdoor/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "passdoor/rng.hpp"

namespace passdoor {

namespace {

void fill_chw(const Image& img, float* dst) {
  const int res = img.h;
  const std::size_t hw = static_cast<std::size_t>(res) * res;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * res + x;
      dst[p] = img.at(y, x, 0) / 255.0f;
      dst[hw + p] = img.at(y, x, 1) / 255.0f;
      dst[2 * hw + p] = img.at(y, x, 2) / 255.0f;
    }
}

void finetune_inplace(DetectorModel& model, const std::vector<TrainSample>& samples,
                      const FinetuneConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("defense fine-tune: no clean data");
  const int res = model.cfg.resolution;
  Adam<float> opt(model.net->params(), cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0xdef3));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const int nb = static_cast<int>(
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - start));
      Tensor<float> x(nb, 3, res, res);
      std::vector<int> ys(static_cast<std::size_t>(nb));
      for (int b = 0; b < nb; ++b) {
        const auto& s = samples[order[start + b]];
        fill_chw(s.pixels, x.sample(b));
        ys[static_cast<std::size_t>(b)] = s.label;
      }
      opt.zero_grad();
      Tensor<float> logits = model.net->forward(x);
      Tensor<float> dlogits(nb, 1, 1, 1);
      const double inv = 1.0 / nb;
      for (int b = 0; b < nb; ++b) {
        const double z = logits.at(b, 0, 0, 0);
        dlogits.at(b, 0, 0, 0) =
            static_cast<float>((sigmoid(z) - ys[static_cast<std::size_t>(b)]) * inv);
      }
      model.net->backward(dlogits);
      opt.step();
    }
  }
}

}  // namespace

DetectorModel clone_detector(const DetectorModel& model) {
  DetectorModel out;
  out.cfg = model.cfg;
  out.config_hash = model.config_hash;
  out.net = std::make_unique<DetectorF>(model.cfg);
  auto src = const_cast<DetectorModel&>(model).net->params();
  auto dst = out.net->params();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].w = *src[i].w;
  out.net->channel_mask() = const_cast<DetectorModel&>(model).net->channel_mask();
  return out;
}

DetectorModel defense_finetune(const DetectorModel& model, const Manifest& clean_data,
                               const FinetuneConfig& cfg) {
  DetectorModel out = clone_detector(model);
  finetune_inplace(out, training_view(clean_data), cfg);
  return out;
}

DetectorModel defense_fineprune(const DetectorModel& model, double prune_fraction,
                                const Manifest& clean_data, const FinetuneConfig& cfg) {
  if (!(prune_fraction >= 0.0 && prune_fraction <= 1.0)) {
    throw std::invalid_argument("prune_fraction must be in [0, 1]");
  }
  DetectorModel out = clone_detector(model);
  const int channels = out.net->last_conv_channels();
  if (channels < 2) throw std::invalid_argument("last conv layer too small to prune");

  // Channel importance: mean |activation| over the clean holdout.
  const auto samples = training_view(clean_data);
  if (samples.empty()) throw std::invalid_argument("fine-pruning: no clean data");
  const int res = out.cfg.resolution;
  std::vector<double> importance(static_cast<std::size_t>(channels), 0.0);
  const int batch = 64;
  long batches = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const int nb = static_cast<int>(std::min<std::size_t>(batch, samples.size() - start));
    Tensor<float> x(nb, 3, res, res);
    for (int b = 0; b < nb; ++b) fill_chw(samples[start + b].pixels, x.sample(b));
    const auto acts = out.net->last_conv_mean_abs(x);
    for (int c = 0; c < channels; ++c) importance[static_cast<std::size_t>(c)] += acts[c];
    ++batches;
  }
  for (auto& v : importance) v /= static_cast<double>(batches);

  const int n_prune = static_cast<int>(
      std::ceil(prune_fraction * static_cast<double>(channels)));
  std::vector<int> idx(static_cast<std::size_t>(channels));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return importance[static_cast<std::size_t>(a)] < importance[static_cast<std::size_t>(b)];
  });
  auto& mask = out.net->channel_mask();
  for (int i = 0; i < n_prune && i < channels; ++i) {
    mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 0.0f;
  }

  finetune_inplace(out, samples, cfg);
  return out;
}

}  // namespace passdoor
