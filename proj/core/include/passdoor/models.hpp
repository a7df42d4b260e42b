#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "passdoor/image.hpp"
#include "passdoor/nn.hpp"
#include "passdoor/passcode.hpp"
#include "passdoor/tensor.hpp"

namespace passdoor {

// ---------------------------------------------------------------------------
// Configs.

/// Trigger generator: U-Net over the image concatenated with the
/// passcode conditioning plane. widths[0] is the stem width, each later
/// entry adds a stride-2 stage; the residual is tanh-bounded to
/// [-epsilon, +epsilon] on the [0,255] pixel scale. out_init_scale
/// damps the output convolution's initialization (0 = exact zero
/// residual before training).
struct GeneratorConfig {
  int resolution = 64;
  int bits = 100;
  float epsilon = 8.0f;
  std::vector<int> widths = {16, 32, 64, 96};
  double out_init_scale = 0.1;

  int depth() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
};

/// Passcode decoder: conv stages halving resolution, then a linear head
/// emitting one logit per bit. head_width > 0 inserts a hidden layer.
struct DecoderConfig {
  int resolution = 64;
  int bits = 100;
  int conv_stages = 3;
  int head_width = 0;

  void validate() const;
  std::string to_json() const;
  static DecoderConfig from_json(const std::string& text);
};

/// Binary authenticity detector; backbone is one of cnn_small, cnn_wide,
/// cnn_deep, cnn_mobile. All backbones map (3, R, R) to one logit.
struct DetectorConfig {
  std::string backbone = "cnn_small";
  int resolution = 64;

  void validate() const;
  std::string to_json() const;
  static DetectorConfig from_json(const std::string& text);
};

// ---------------------------------------------------------------------------
// Networks. Templated on scalar so the gradient-check tests can run the
// exact same code in double precision.

template <typename T>
class UNetGenerator {
public:
  explicit UNetGenerator(const GeneratorConfig& cfg);
  void init(Rng& rng);

  /// x: (N, 4, R, R) image channels in [0,1] plus the conditioning
  /// plane. Returns the bounded residual (N, 3, R, R) on the [0,1]
  /// scale, i.e. within [-epsilon/255, +epsilon/255].
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& d_res);

  std::vector<ParamRef<T>> params();
  const GeneratorConfig& config() const { return cfg_; }

  /// Training-time multiplier on the residual bound. The trigger
  /// trainer anneals this from >1 down to 1 so the code can establish
  /// itself before the final bound bites; it is always 1 at inference.
  void set_bound_scale(double s) { bound_scale_ = s; }
  double bound_scale() const { return bound_scale_; }

private:
  GeneratorConfig cfg_;
  double bound_scale_ = 1.0;
  Conv2d<T> stem_;
  LeakyReLU<T> stem_act_;
  struct Enc {
    Conv2d<T> down;
    LeakyReLU<T> down_act;
    Conv2d<T> mix;
    LeakyReLU<T> mix_act;
  };
  struct Dec {
    Upsample2x<T> up;
    Conv2d<T> reduce;
    LeakyReLU<T> reduce_act;
    Conv2d<T> mix;
    LeakyReLU<T> mix_act;
  };
  std::vector<std::unique_ptr<Enc>> enc_;
  std::vector<std::unique_ptr<Dec>> dec_;
  Conv2d<T> out_;
  Tanh<T> out_act_;
};

template <typename T>
class PasscodeDecoder {
public:
  explicit PasscodeDecoder(const DecoderConfig& cfg);
  void init(Rng& rng);

  /// x: (N, 3, R, R) in [0,1]. Returns per-bit logits (N, bits, 1, 1).
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& d_logits, bool accumulate_param_grads = true);

  std::vector<ParamRef<T>> params();
  const DecoderConfig& config() const { return cfg_; }

private:
  DecoderConfig cfg_;
  Conv2d<T> stem_;
  LeakyReLU<T> stem_act_;
  struct Stage {
    Conv2d<T> conv;
    LeakyReLU<T> act;
  };
  std::vector<std::unique_ptr<Stage>> stages_;
  Conv2d<T> mix_;
  LeakyReLU<T> mix_act_;
  std::unique_ptr<Linear<T>> hidden_;
  LeakyReLU<T> hidden_act_;
  std::unique_ptr<Linear<T>> head_;
};

template <typename T>
class Detector {
public:
  explicit Detector(const DetectorConfig& cfg);
  void init(Rng& rng);

  /// x: (N, 3, R, R) in [0,1]. Returns one authenticity logit per
  /// sample as (N, 1, 1, 1).
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& d_logit, bool accumulate_param_grads = true);

  std::vector<ParamRef<T>> params();
  const DetectorConfig& config() const { return cfg_; }

  /// Last convolution stage, exposed for the fine-pruning defense.
  int last_conv_channels() const { return last_channels_; }
  std::vector<T>& channel_mask() { return mask_.mask(); }
  /// Mean |activation| per last-conv channel, averaged over the batch.
  std::vector<double> last_conv_mean_abs(const Tensor<T>& x);

  /// Last-conv feature maps and their input gradient; the trigger
  /// trainer's perceptual distance term hooks in here.
  Tensor<T> forward_features(const Tensor<T>& x) { return features(x); }
  Tensor<T> backward_features(const Tensor<T>& d_feat, bool accumulate_param_grads = true);

private:
  Tensor<T> features(const Tensor<T>& x);

  DetectorConfig cfg_;
  struct Stage {
    std::unique_ptr<Conv2d<T>> conv;       // standard path
    std::unique_ptr<Conv2d<T>> conv2;      // cnn_deep second conv
    std::unique_ptr<DepthwiseConv2d<T>> dw;  // cnn_mobile path
    std::unique_ptr<Conv2d<T>> pw;
    LeakyReLU<T> act;
    LeakyReLU<T> act2;
  };
  std::vector<std::unique_ptr<Stage>> stages_;
  ChannelMask<T> mask_;
  GlobalAvgPool<T> gap_;
  std::unique_ptr<Linear<T>> head_;
  int last_channels_ = 0;
};

// Aliases for the production precision.
using GeneratorF = UNetGenerator<float>;
using DecoderF = PasscodeDecoder<float>;
using DetectorF = Detector<float>;

// ---------------------------------------------------------------------------
// Image-level operations (single sample, [0,255] pixel scale).

/// Count of trainable scalars.
template <typename T, typename Net>
std::size_t param_count(Net& net) {
  std::size_t n = 0;
  for (auto& p : net.params()) n += p.w->size();
  return n;
}

/// Stack images into a (N, 3, H, W) tensor scaled to [0,1].
Tensor<float> to_tensor(const std::vector<const Image*>& imgs);
Tensor<float> to_tensor(const Image& img);

/// Back to a [0,255] image (no quantization).
Image from_tensor(const Tensor<float>& t, int index);

/// Concatenate the conditioning plane as a fourth channel.
Tensor<float> with_plane(const Tensor<float>& x, const std::vector<const Plane*>& planes);

/// delta = G(x, p): bounded residual on the [0,255] scale, same shape
/// as x, |delta| <= epsilon.
Image generate_trigger(GeneratorF& g, const Image& x, const Passcode& p);

/// Elementwise x + delta clamped to [0,255]; stays real-valued.
Image apply_trigger(const Image& x, const Image& delta);

/// Per-bit probabilities in (0,1).
std::vector<float> decode_passcode(DecoderF& d, const Image& x_poisoned);

/// Authenticity probability in [0,1].
float detector_forward(DetectorF& f, const Image& x);

}  // namespace passdoor
