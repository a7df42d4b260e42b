#pragma once

// Template bodies for the networks in models.hpp.

#include <cmath>

#include "passdoor/models.hpp"

namespace passdoor {

// ---------------------------------------------------------------------------
// UNetGenerator

template <typename T>
UNetGenerator<T>::UNetGenerator(const GeneratorConfig& cfg)
    : cfg_(cfg), stem_("g.stem", 4, cfg.widths.at(0)),
      out_("g.out", cfg.widths.at(0), 3, 3, 1, cfg.out_init_scale) {
  cfg.validate();
  for (int i = 0; i < cfg.depth(); ++i) {
    const int cin = cfg.widths[static_cast<std::size_t>(i)];
    const int cout = cfg.widths[static_cast<std::size_t>(i) + 1];
    auto e = std::make_unique<Enc>(Enc{
        Conv2d<T>("g.enc" + std::to_string(i) + ".down", cin, cout, 3, 2),
        LeakyReLU<T>(),
        Conv2d<T>("g.enc" + std::to_string(i) + ".mix", cout, cout),
        LeakyReLU<T>()});
    enc_.push_back(std::move(e));
  }
  for (int i = cfg.depth() - 1; i >= 0; --i) {
    const int cin = cfg.widths[static_cast<std::size_t>(i) + 1];
    const int cout = cfg.widths[static_cast<std::size_t>(i)];
    auto d = std::make_unique<Dec>(Dec{
        Upsample2x<T>{},
        Conv2d<T>("g.dec" + std::to_string(i) + ".reduce", cin, cout),
        LeakyReLU<T>(),
        Conv2d<T>("g.dec" + std::to_string(i) + ".mix", cout, cout),
        LeakyReLU<T>()});
    dec_.push_back(std::move(d));
  }
}

template <typename T>
void UNetGenerator<T>::init(Rng& rng) {
  stem_.init(rng);
  for (auto& e : enc_) {
    e->down.init(rng);
    e->mix.init(rng);
  }
  for (auto& d : dec_) {
    d->reduce.init(rng);
    d->mix.init(rng);
  }
  out_.init(rng);
}

template <typename T>
Tensor<T> UNetGenerator<T>::forward(const Tensor<T>& x) {
  // Encoder activations double as skip connections (additive).
  std::vector<Tensor<T>> skips;
  Tensor<T> h = stem_act_.forward(stem_.forward(x));
  skips.push_back(h);
  for (auto& e : enc_) {
    h = e->down_act.forward(e->down.forward(h));
    h = e->mix_act.forward(e->mix.forward(h));
    skips.push_back(h);
  }
  for (std::size_t di = 0; di < dec_.size(); ++di) {
    auto& d = dec_[di];
    h = d->up.forward(h);
    h = d->reduce_act.forward(d->reduce.forward(h));
    const Tensor<T>& skip = skips[dec_.size() - 1 - di];
    for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += skip.v[i];
    h = d->mix_act.forward(d->mix.forward(h));
  }
  Tensor<T> res = out_act_.forward(out_.forward(h));
  const T scale = static_cast<T>(cfg_.epsilon * bound_scale_ / 255.0);
  for (auto& v : res.v) v *= scale;
  return res;
}

template <typename T>
Tensor<T> UNetGenerator<T>::backward(const Tensor<T>& d_res) {
  const T scale = static_cast<T>(cfg_.epsilon * bound_scale_ / 255.0);
  Tensor<T> g = d_res;
  for (auto& v : g.v) v *= scale;
  g = out_.backward(out_act_.backward(g));

  // Skip gradients accumulate where the forward added them.
  std::vector<Tensor<T>> skip_grads(dec_.size() + 1);
  for (std::size_t r = 0; r < dec_.size(); ++r) {
    const std::size_t di = dec_.size() - 1 - r;  // walk decoder stages in reverse
    auto& d = dec_[di];
    g = d->mix.backward(d->mix_act.backward(g));
    skip_grads[dec_.size() - 1 - di] = g;  // gradient into the matching encoder output
    g = d->reduce.backward(d->reduce_act.backward(g));
    g = d->up.backward(g);
  }
  // g now reaches the deepest encoder activation directly.
  for (std::size_t r = 0; r < enc_.size(); ++r) {
    const std::size_t ei = enc_.size() - 1 - r;
    Tensor<T>& extra = skip_grads[ei + 1];
    if (extra.size() == g.size() && extra.size() > 0) {
      for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += extra.v[i];
    }
    auto& e = enc_[ei];
    g = e->mix.backward(e->mix_act.backward(g));
    g = e->down.backward(e->down_act.backward(g));
  }
  Tensor<T>& stem_extra = skip_grads[0];
  if (stem_extra.size() == g.size() && stem_extra.size() > 0) {
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += stem_extra.v[i];
  }
  return stem_.backward(stem_act_.backward(g));
}

template <typename T>
std::vector<ParamRef<T>> UNetGenerator<T>::params() {
  std::vector<ParamRef<T>> out;
  stem_.collect(out);
  for (auto& e : enc_) {
    e->down.collect(out);
    e->mix.collect(out);
  }
  for (auto& d : dec_) {
    d->reduce.collect(out);
    d->mix.collect(out);
  }
  out_.collect(out);
  return out;
}

// ---------------------------------------------------------------------------
// PasscodeDecoder

namespace detail {
inline int decoder_final_width(int stages) {
  int w = 16;
  for (int i = 0; i < stages; ++i) w = std::min(64, w * 2);
  return w;
}
}  // namespace detail

template <typename T>
PasscodeDecoder<T>::PasscodeDecoder(const DecoderConfig& cfg)
    : cfg_(cfg), stem_("d.stem", 3, 16),
      mix_("d.mix", detail::decoder_final_width(cfg.conv_stages),
           detail::decoder_final_width(cfg.conv_stages)) {
  cfg.validate();
  int width = 16;
  int res = cfg.resolution;
  for (int i = 0; i < cfg.conv_stages; ++i) {
    const int next = std::min(64, width * 2);
    stages_.push_back(std::make_unique<Stage>(Stage{
        Conv2d<T>("d.stage" + std::to_string(i), width, next, 3, 2), LeakyReLU<T>()}));
    width = next;
    res /= 2;
  }
  const int flat = width * res * res;
  if (cfg.head_width > 0) {
    hidden_ = std::make_unique<Linear<T>>("d.hidden", flat, cfg.head_width);
    head_ = std::make_unique<Linear<T>>("d.head", cfg.head_width, cfg.bits);
  } else {
    head_ = std::make_unique<Linear<T>>("d.head", flat, cfg.bits);
  }
}

template <typename T>
void PasscodeDecoder<T>::init(Rng& rng) {
  stem_.init(rng);
  for (auto& s : stages_) s->conv.init(rng);
  mix_.init(rng);
  if (hidden_) hidden_->init(rng);
  head_->init(rng);
}

template <typename T>
Tensor<T> PasscodeDecoder<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = stem_act_.forward(stem_.forward(x));
  for (auto& s : stages_) h = s->act.forward(s->conv.forward(h));
  h = mix_act_.forward(mix_.forward(h));
  if (hidden_) h = hidden_act_.forward(hidden_->forward(h));
  return head_->forward(h);
}

template <typename T>
Tensor<T> PasscodeDecoder<T>::backward(const Tensor<T>& d_logits, bool acc) {
  Tensor<T> g = head_->backward(d_logits, acc);
  if (hidden_) g = hidden_->backward(hidden_act_.backward(g), acc);
  g = mix_.backward(mix_act_.backward(g), acc);
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    g = (*it)->conv.backward((*it)->act.backward(g), acc);
  }
  return stem_.backward(stem_act_.backward(g), acc);
}

template <typename T>
std::vector<ParamRef<T>> PasscodeDecoder<T>::params() {
  std::vector<ParamRef<T>> out;
  stem_.collect(out);
  for (auto& s : stages_) s->conv.collect(out);
  mix_.collect(out);
  if (hidden_) hidden_->collect(out);
  head_->collect(out);
  return out;
}

// ---------------------------------------------------------------------------
// Detector backbones

template <typename T>
Detector<T>::Detector(const DetectorConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const std::string& b = cfg.backbone;
  std::vector<int> widths;
  if (b == "cnn_small" || b == "cnn_deep" || b == "cnn_mobile") {
    widths = {16, 32, 64, 128};
  } else {  // cnn_wide
    widths = {32, 64, 128, 256};
  }
  int cin = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    auto st = std::make_unique<Stage>();
    const std::string nm = "f.stage" + std::to_string(i);
    if (b == "cnn_mobile" && i > 0) {
      st->dw = std::make_unique<DepthwiseConv2d<T>>(nm + ".dw", cin, 3, 2);
      st->pw = std::make_unique<Conv2d<T>>(nm + ".pw", cin, widths[i], 1, 1);
    } else {
      st->conv = std::make_unique<Conv2d<T>>(nm + ".conv", cin, widths[i], 3, 2);
      if (b == "cnn_deep") {
        st->conv2 = std::make_unique<Conv2d<T>>(nm + ".conv2", widths[i], widths[i]);
      }
    }
    cin = widths[i];
    stages_.push_back(std::move(st));
  }
  last_channels_ = cin;
  mask_.resize(cin);
  head_ = std::make_unique<Linear<T>>("f.head", cin, 1);
}

template <typename T>
void Detector<T>::init(Rng& rng) {
  for (auto& s : stages_) {
    if (s->conv) s->conv->init(rng);
    if (s->conv2) s->conv2->init(rng);
    if (s->dw) s->dw->init(rng);
    if (s->pw) s->pw->init(rng);
  }
  head_->init(rng);
}

template <typename T>
Tensor<T> Detector<T>::features(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& s : stages_) {
    if (s->dw) {
      h = s->dw->forward(h);
      h = s->act.forward(s->pw->forward(h));
    } else {
      h = s->act.forward(s->conv->forward(h));
      if (s->conv2) h = s->act2.forward(s->conv2->forward(h));
    }
  }
  return mask_.forward(h);
}

template <typename T>
Tensor<T> Detector<T>::forward(const Tensor<T>& x) {
  return head_->forward(gap_.forward(features(x)));
}

template <typename T>
Tensor<T> Detector<T>::backward_features(const Tensor<T>& d_feat, bool acc) {
  Tensor<T> g = mask_.backward(d_feat);
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    auto& s = **it;
    if (s.dw) {
      g = s.pw->backward(s.act.backward(g), acc);
      g = s.dw->backward(g, acc);
    } else {
      if (s.conv2) g = s.conv2->backward(s.act2.backward(g), acc);
      g = s.conv->backward(s.act.backward(g), acc);
    }
  }
  return g;
}

template <typename T>
Tensor<T> Detector<T>::backward(const Tensor<T>& d_logit, bool acc) {
  Tensor<T> g = gap_.backward(head_->backward(d_logit, acc));
  return backward_features(g, acc);
}

template <typename T>
std::vector<ParamRef<T>> Detector<T>::params() {
  std::vector<ParamRef<T>> out;
  for (auto& s : stages_) {
    if (s->conv) s->conv->collect(out);
    if (s->conv2) s->conv2->collect(out);
    if (s->dw) s->dw->collect(out);
    if (s->pw) s->pw->collect(out);
  }
  head_->collect(out);
  return out;
}

template <typename T>
std::vector<double> Detector<T>::last_conv_mean_abs(const Tensor<T>& x) {
  Tensor<T> h = features(x);
  std::vector<double> acc(static_cast<std::size_t>(h.c), 0.0);
  const std::size_t hw = static_cast<std::size_t>(h.h) * h.w;
  for (int s = 0; s < h.n; ++s) {
    for (int c = 0; c < h.c; ++c) {
      const T* p = h.sample(s) + static_cast<std::size_t>(c) * hw;
      double a = 0.0;
      for (std::size_t i = 0; i < hw; ++i) a += std::abs(static_cast<double>(p[i]));
      acc[static_cast<std::size_t>(c)] += a / static_cast<double>(hw);
    }
  }
  for (auto& a : acc) a /= static_cast<double>(x.n);
  return acc;
}

}  // namespace passdoor
