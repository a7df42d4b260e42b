#include "passdoor/models.hpp"
#include "passdoor/models_impl.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
}

void GeneratorConfig::validate() const {
  if (!(epsilon > 0.0f)) throw std::invalid_argument("generator epsilon must be > 0");
  if (out_init_scale < 0.0) throw std::invalid_argument("out_init_scale must be >= 0");
  if (depth() < 2) throw std::invalid_argument("generator depth must be >= 2");
  if (resolution % (1 << depth()) != 0) {
    throw std::invalid_argument("generator resolution must be divisible by 2^depth");
  }
  if (bits < 8) throw std::invalid_argument("bits must be >= 8");
}

std::string GeneratorConfig::to_json() const {
  json j;
  j["resolution"] = resolution;
  j["bits"] = bits;
  j["epsilon"] = epsilon;
  j["widths"] = widths;
  j["out_init_scale"] = out_init_scale;
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GeneratorConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.bits = j.at("bits").get<int>();
  c.epsilon = j.at("epsilon").get<float>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.out_init_scale = j.at("out_init_scale").get<double>();
  c.validate();
  return c;
}

void DecoderConfig::validate() const {
  if (conv_stages < 1) throw std::invalid_argument("decoder needs at least one conv stage");
  if (resolution % (1 << conv_stages) != 0) {
    throw std::invalid_argument("decoder resolution must be divisible by 2^stages");
  }
  if (bits < 8) throw std::invalid_argument("bits must be >= 8");
  if (head_width < 0) throw std::invalid_argument("head_width must be >= 0");
}

std::string DecoderConfig::to_json() const {
  json j;
  j["resolution"] = resolution;
  j["bits"] = bits;
  j["conv_stages"] = conv_stages;
  j["head_width"] = head_width;
  return j.dump();
}

DecoderConfig DecoderConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  DecoderConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.bits = j.at("bits").get<int>();
  c.conv_stages = j.at("conv_stages").get<int>();
  c.head_width = j.at("head_width").get<int>();
  c.validate();
  return c;
}

void DetectorConfig::validate() const {
  static const char* kBackbones[] = {"cnn_small", "cnn_wide", "cnn_deep", "cnn_mobile"};
  if (std::find(std::begin(kBackbones), std::end(kBackbones), backbone) ==
      std::end(kBackbones)) {
    throw std::invalid_argument("unknown backbone: " + backbone);
  }
  // Stride-2 stages floor odd sizes; anything from 8 px up works.
  if (resolution < 8) throw std::invalid_argument("detector resolution must be >= 8");
}

std::string DetectorConfig::to_json() const {
  json j;
  j["backbone"] = backbone;
  j["resolution"] = resolution;
  return j.dump();
}

DetectorConfig DetectorConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  DetectorConfig c;
  c.backbone = j.at("backbone").get<std::string>();
  c.resolution = j.at("resolution").get<int>();
  c.validate();
  return c;
}

// Explicit instantiations for the two precisions in use.
template class UNetGenerator<float>;
template class UNetGenerator<double>;
template class PasscodeDecoder<float>;
template class PasscodeDecoder<double>;
template class Detector<float>;
template class Detector<double>;

// ---------------------------------------------------------------------------

Tensor<float> to_tensor(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("to_tensor: empty batch");
  const Image& first = *imgs.front();
  Tensor<float> t(static_cast<int>(imgs.size()), first.c, first.h, first.w);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const Image& img = *imgs[i];
    if (!img.same_shape(first)) throw std::invalid_argument("to_tensor: ragged batch");
    for (int ch = 0; ch < img.c; ++ch)
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
          t.at(static_cast<int>(i), ch, y, x) = img.at(y, x, ch) / 255.0f;
  }
  return t;
}

Tensor<float> to_tensor(const Image& img) { return to_tensor(std::vector<const Image*>{&img}); }

Image from_tensor(const Tensor<float>& t, int index) {
  Image img(t.h, t.w, t.c);
  for (int ch = 0; ch < t.c; ++ch)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) img.at(y, x, ch) = t.at(index, ch, y, x) * 255.0f;
  return img;
}

Tensor<float> with_plane(const Tensor<float>& x, const std::vector<const Plane*>& planes) {
  if (static_cast<int>(planes.size()) != x.n) {
    throw std::invalid_argument("with_plane: one plane per sample required");
  }
  Tensor<float> t(x.n, x.c + 1, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) t.at(i, ch, y, xx) = x.at(i, ch, y, xx);
    const Plane& p = *planes[static_cast<std::size_t>(i)];
    if (p.h != x.h || p.w != x.w) throw std::invalid_argument("with_plane: plane shape mismatch");
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) t.at(i, x.c, y, xx) = p.at(y, xx);
  }
  return t;
}

Image generate_trigger(GeneratorF& g, const Image& x, const Passcode& p) {
  const GeneratorConfig& cfg = g.config();
  if (x.h != cfg.resolution || x.w != cfg.resolution || x.c != 3) {
    throw std::invalid_argument("generate_trigger: image shape mismatch");
  }
  if (p.size() != cfg.bits) throw std::invalid_argument("generate_trigger: bit count mismatch");
  Plane plane = spatial_encode(p, x.h, x.w);
  Tensor<float> in = with_plane(to_tensor(x), {&plane});
  Tensor<float> res = g.forward(in);
  Image delta(x.h, x.w, 3);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) delta.at(y, xx, ch) = res.at(0, ch, y, xx) * 255.0f;
  return delta;
}

Image apply_trigger(const Image& x, const Image& delta) {
  if (!x.same_shape(delta)) throw std::invalid_argument("apply_trigger: shape mismatch");
  Image out = x;
  for (std::size_t i = 0; i < out.px.size(); ++i) {
    out.px[i] = std::min(255.0f, std::max(0.0f, out.px[i] + delta.px[i]));
  }
  return out;
}

std::vector<float> decode_passcode(DecoderF& d, const Image& x_poisoned) {
  const DecoderConfig& cfg = d.config();
  if (x_poisoned.h != cfg.resolution || x_poisoned.w != cfg.resolution) {
    throw std::invalid_argument("decode_passcode: image shape mismatch");
  }
  Tensor<float> logits = d.forward(to_tensor(x_poisoned));
  std::vector<float> probs(static_cast<std::size_t>(cfg.bits));
  for (int i = 0; i < cfg.bits; ++i) {
    probs[static_cast<std::size_t>(i)] =
        static_cast<float>(sigmoid(static_cast<double>(logits.v[static_cast<std::size_t>(i)])));
  }
  return probs;
}

float detector_forward(DetectorF& f, const Image& x) {
  if (x.h != f.config().resolution || x.w != f.config().resolution) {
    throw std::invalid_argument("detector_forward: image shape mismatch");
  }
  Tensor<float> logit = f.forward(to_tensor(x));
  return static_cast<float>(sigmoid(static_cast<double>(logit.v[0])));
}

}  // namespace passdoor
