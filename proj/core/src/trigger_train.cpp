#include "passdoor/trigger_train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "passdoor/checkpoint.hpp"
#include "passdoor/evalsuite.hpp"
#include "passdoor/util.hpp"

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;

/// Compact u8 pixel cache so a whole training set fits comfortably in
/// memory; converts to normalized CHW floats per batch.
struct PixelStore {
  int res = 0;
  std::vector<std::uint8_t> data;
  std::vector<int> labels;

  explicit PixelStore(const Manifest& m) {
    res = m.resolution;
    const std::size_t per = static_cast<std::size_t>(res) * res * 3;
    data.resize(per * m.records.size());
    labels.reserve(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      const Image img = load_png(m.resolve(m.records[i]));
      if (img.h != res || img.w != res) {
        throw std::runtime_error("resolution mismatch in " + m.records[i].id);
      }
      std::uint8_t* dst = data.data() + per * i;
      for (std::size_t k = 0; k < per; ++k) {
        dst[k] = static_cast<std::uint8_t>(img.px[k]);
      }
      labels.push_back(m.records[i].true_label);
    }
  }

  std::size_t count() const { return labels.size(); }

  /// Writes one sample as 3 x res x res floats in [0,1].
  void fill_chw(std::size_t idx, float* dst) const {
    const std::size_t per = static_cast<std::size_t>(res) * res * 3;
    const std::uint8_t* src = data.data() + per * idx;
    const std::size_t hw = static_cast<std::size_t>(res) * res;
    for (std::size_t p = 0; p < hw; ++p) {
      dst[p] = static_cast<float>(src[p * 3 + 0]) / 255.0f;
      dst[hw + p] = static_cast<float>(src[p * 3 + 1]) / 255.0f;
      dst[2 * hw + p] = static_cast<float>(src[p * 3 + 2]) / 255.0f;
    }
  }
};

void write_plane(const Plane& plane, float* dst) {
  std::copy(plane.v.begin(), plane.v.end(), dst);
}

struct HoldoutMetrics {
  double bit_acc = 0.0;
  double psnr_db = 0.0;
  double ssim_v = 0.0;
};

HoldoutMetrics evaluate_holdout(GeneratorF& g, DecoderF& d, const PixelStore& store,
                                const std::vector<std::size_t>& holdout,
                                std::uint64_t seed) {
  const int res = g.config().resolution;
  const int bits = g.config().bits;
  const std::size_t hw = static_cast<std::size_t>(res) * res;
  double bit_hits = 0.0, bit_total = 0.0, psnr_acc = 0.0, ssim_acc = 0.0;
  const int batch = 16;
  for (std::size_t start = 0; start < holdout.size(); start += batch) {
    const int nb = static_cast<int>(std::min<std::size_t>(batch, holdout.size() - start));
    Tensor<float> xin(nb, 4, res, res);
    Tensor<float> x(nb, 3, res, res);
    std::vector<Passcode> codes;
    for (int b = 0; b < nb; ++b) {
      const std::size_t idx = holdout[start + b];
      store.fill_chw(idx, x.sample(b));
      std::copy(x.sample(b), x.sample(b) + 3 * hw, xin.sample(b));
      codes.push_back(random_passcode(mix_seed(seed, 0xE7A1 + start + b), bits));
      write_plane(spatial_encode(codes.back(), res, res), xin.sample(b) + 3 * hw);
    }
    Tensor<float> delta = g.forward(xin);
    Tensor<float> xq(nb, 3, res, res);
    for (std::size_t i = 0; i < xq.v.size(); ++i) {
      // Deployment path: add, clamp, store as 8-bit.
      const float v = std::clamp(x.v[i] + delta.v[i], 0.0f, 1.0f);
      xq.v[i] = std::round(v * 255.0f) / 255.0f;
    }
    Tensor<float> logits = d.forward(xq);
    for (int b = 0; b < nb; ++b) {
      for (int i = 0; i < bits; ++i) {
        const bool pred = logits.at(b, i, 0, 0) >= 0.0f;
        bit_hits += pred == (codes[static_cast<std::size_t>(b)].bit(i) != 0);
        bit_total += 1.0;
      }
      Image orig = from_tensor(x, b);
      Image poisoned = from_tensor(xq, b);
      psnr_acc += psnr(orig, poisoned);
      // SSIM is undefined below its 11x11 window (tiny test instances).
      ssim_acc += res >= 11 ? ssim(orig, poisoned) : 0.0;
    }
  }
  HoldoutMetrics hm;
  hm.bit_acc = bit_hits / bit_total;
  hm.psnr_db = psnr_acc / static_cast<double>(holdout.size());
  hm.ssim_v = ssim_acc / static_cast<double>(holdout.size());
  return hm;
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss operations.

double loss_dis(const Image& x, const Image& xp, DetectorF* surrogate,
                double perceptual_weight) {
  if (!x.same_shape(xp)) throw std::invalid_argument("loss_dis: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.px.size(); ++i) {
    const double d = (static_cast<double>(xp.px[i]) - x.px[i]) / 255.0;
    acc += d * d;
  }
  double out = acc / static_cast<double>(x.px.size());
  if (perceptual_weight > 0.0) {
    if (!surrogate) throw std::invalid_argument("perceptual term needs a surrogate");
    Tensor<float> fa = surrogate->forward_features(to_tensor(x));
    Tensor<float> fb = surrogate->forward_features(to_tensor(xp));
    double pacc = 0.0;
    for (std::size_t i = 0; i < fa.v.size(); ++i) {
      const double d = static_cast<double>(fb.v[i]) - fa.v[i];
      pacc += d * d;
    }
    out += perceptual_weight * pacc / static_cast<double>(fa.v.size());
  }
  return out;
}

double loss_rec(const std::vector<float>& probs, const Passcode& p) {
  if (static_cast<int>(probs.size()) != p.size()) {
    throw std::invalid_argument("loss_rec: length mismatch");
  }
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(probs[static_cast<std::size_t>(i)]),
                                1e-7, 1.0 - 1e-7);
    acc += p.bit(i) ? -std::log(q) : -std::log(1.0 - q);
  }
  return acc / static_cast<double>(p.size());
}

double loss_sup(DetectorF& surrogate, const Image& xp, int y) {
  Tensor<float> logit = surrogate.forward(to_tensor(xp));
  return bce_with_logits(static_cast<double>(logit.v[0]), 1.0 - y);
}

double total_loss(double dis, double rec, double sup, double lambda_dis, double lambda_rec,
                  double lambda_sup, bool clean_label) {
  double t = lambda_dis * dis + lambda_rec * rec;
  if (clean_label) t += lambda_sup * sup;
  return t;
}

// ---------------------------------------------------------------------------

void TriggerTrainConfig::validate() const {
  if (lambda_dis < 0 || lambda_rec < 0 || lambda_sup < 0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  if (batch < 1 || steps < 1 || lr <= 0) throw std::invalid_argument("bad training config");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout_fraction must be in (0,1)");
  }
  if (bound_boost < 1.0) throw std::invalid_argument("bound_boost must be >= 1");
  if (dec_pretrain_frac < 0.0 || dec_pretrain_frac >= 1.0 || bound_warmup_frac < 0.0 ||
      bound_warmup_frac >= 1.0 || dis_warmup_frac < 0.0 || dis_warmup_frac >= 1.0) {
    throw std::invalid_argument("schedule fractions must be in [0, 1)");
  }
}

std::string TriggerTrainConfig::to_json() const {
  json j;
  j["lambda_dis"] = lambda_dis;
  j["lambda_rec"] = lambda_rec;
  j["lambda_sup"] = lambda_sup;
  j["perceptual_weight"] = perceptual_weight;
  j["batch"] = batch;
  j["lr"] = lr;
  j["steps"] = steps;
  j["clean_label"] = clean_label;
  j["seed"] = seed;
  j["holdout_fraction"] = holdout_fraction;
  j["bit_acc_threshold"] = bit_acc_threshold;
  j["psnr_floor"] = psnr_floor;
  j["log_every"] = log_every;
  j["dec_pretrain_frac"] = dec_pretrain_frac;
  j["bound_boost"] = bound_boost;
  j["bound_warmup_frac"] = bound_warmup_frac;
  j["dis_warmup_frac"] = dis_warmup_frac;
  return j.dump();
}

TriggerTrainConfig TriggerTrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TriggerTrainConfig c;
  c.lambda_dis = j.at("lambda_dis").get<double>();
  c.lambda_rec = j.at("lambda_rec").get<double>();
  c.lambda_sup = j.at("lambda_sup").get<double>();
  c.perceptual_weight = j.at("perceptual_weight").get<double>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.steps = j.at("steps").get<long>();
  c.clean_label = j.at("clean_label").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.holdout_fraction = j.at("holdout_fraction").get<double>();
  c.bit_acc_threshold = j.at("bit_acc_threshold").get<double>();
  c.psnr_floor = j.at("psnr_floor").get<double>();
  c.log_every = j.at("log_every").get<int>();
  c.dec_pretrain_frac = j.at("dec_pretrain_frac").get<double>();
  c.bound_boost = j.at("bound_boost").get<double>();
  c.bound_warmup_frac = j.at("bound_warmup_frac").get<double>();
  c.dis_warmup_frac = j.at("dis_warmup_frac").get<double>();
  c.validate();
  return c;
}

std::string GeneratorBundle::config_json() const {
  json j;
  j["generator"] = json::parse(gen_cfg.to_json());
  j["decoder"] = json::parse(dec_cfg.to_json());
  j["train"] = json::parse(train_cfg.to_json());
  j["surrogate_hash"] = surrogate_hash;
  return j.dump();
}

UnderfitError::UnderfitError(double bit_acc_, double psnr_, double threshold, double floor)
    : std::runtime_error("underfit: holdout bit accuracy " + std::to_string(bit_acc_) +
                         " (threshold " + std::to_string(threshold) + "), psnr " +
                         std::to_string(psnr_) + " dB (floor " + std::to_string(floor) + ")"),
      bit_acc(bit_acc_), psnr(psnr_) {}

GeneratorBundle train_trigger_generator(const Manifest& manifest,
                                        const GeneratorConfig& gen_cfg,
                                        const DecoderConfig& dec_cfg,
                                        const TriggerTrainConfig& cfg, DetectorF* surrogate,
                                        const std::string& surrogate_hash,
                                        const std::filesystem::path& log_dir) {
  cfg.validate();
  gen_cfg.validate();
  dec_cfg.validate();
  if (manifest.records.empty()) throw std::invalid_argument("empty manifest");
  if (gen_cfg.resolution != dec_cfg.resolution || gen_cfg.bits != dec_cfg.bits) {
    throw std::invalid_argument("generator/decoder config mismatch");
  }
  if (cfg.clean_label && surrogate == nullptr) {
    throw std::invalid_argument("clean-label training requires a surrogate detector");
  }
  if (cfg.perceptual_weight > 0.0 && surrogate == nullptr) {
    throw std::invalid_argument("perceptual distance requires a surrogate detector");
  }

  const int res = gen_cfg.resolution;
  const int bits = gen_cfg.bits;
  const std::size_t hw = static_cast<std::size_t>(res) * res;

  PixelStore store(manifest);
  std::vector<std::size_t> order(store.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(mix_seed(cfg.seed, 0x5b17));
  split_rng.shuffle(order);
  std::size_t n_holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.holdout_fraction *
                                               static_cast<double>(store.count()))));
  n_holdout = std::min(n_holdout, store.count() - 1);
  std::vector<std::size_t> holdout(order.begin(), order.begin() + n_holdout);
  std::vector<std::size_t> train(order.begin() + n_holdout, order.end());

  auto g = std::make_unique<GeneratorF>(gen_cfg);
  auto d = std::make_unique<DecoderF>(dec_cfg);
  Rng winit(mix_seed(cfg.seed, 0x11a7));
  g->init(winit);
  d->init(winit);

  std::vector<ParamRef<float>> params = g->params();
  for (auto& p : d->params()) params.push_back(p);
  Adam<float> opt(params, cfg.lr);

  std::ofstream log;
  if (!log_dir.empty()) {
    std::filesystem::create_directories(log_dir);
    log.open(log_dir / "trainlog.jsonl");
  }

  Rng rng(mix_seed(cfg.seed, 0x90d2));
  const int nb = cfg.batch;
  std::vector<double> loss_tail;
  const long pretrain_steps = std::lround(cfg.dec_pretrain_frac * static_cast<double>(cfg.steps));
  const double bound_warmup = cfg.bound_warmup_frac * static_cast<double>(cfg.steps);
  const double dis_warmup = cfg.dis_warmup_frac * static_cast<double>(cfg.steps);
  for (long step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    const bool pretrain = step < pretrain_steps;
    // Schedules measured from the end of the pretrain phase: wide bound
    // early so the code can form, distance pressure ramping in after.
    const double joint_step = static_cast<double>(step - pretrain_steps);
    if (bound_warmup > 0) {
      const double u = pretrain ? 0.0 : std::min(1.0, joint_step / bound_warmup);
      g->set_bound_scale(1.0 + (cfg.bound_boost - 1.0) * (1.0 - u));
    }
    const double lambda_dis_t =
        pretrain ? 0.0
                 : (dis_warmup > 0
                        ? cfg.lambda_dis * std::min(1.0, joint_step / dis_warmup)
                        : cfg.lambda_dis);

    Tensor<float> x(nb, 3, res, res);
    Tensor<float> xin(nb, 4, res, res);
    std::vector<Passcode> codes;
    std::vector<int> ys(static_cast<std::size_t>(nb));
    for (int b = 0; b < nb; ++b) {
      const std::size_t idx = train[rng.index(train.size())];
      store.fill_chw(idx, x.sample(b));
      std::copy(x.sample(b), x.sample(b) + 3 * hw, xin.sample(b));
      codes.push_back(random_passcode(rng.next_u64(), bits));
      write_plane(spatial_encode(codes.back(), res, res), xin.sample(b) + 3 * hw);
      ys[static_cast<std::size_t>(b)] = store.labels[idx];
    }

    if (pretrain) {
      // Supervised decoder phase: the canonical stamp (the conditioning
      // plane replicated across channels at the boosted bound) plays
      // the generator's part so the decoder locks onto the code first.
      const float amp = static_cast<float>(cfg.bound_boost * gen_cfg.epsilon / 255.0);
      Tensor<float> xp(nb, 3, res, res);
      for (int b = 0; b < nb; ++b) {
        const float* plane = xin.sample(b) + 3 * hw;
        for (int c = 0; c < 3; ++c)
          for (std::size_t p = 0; p < hw; ++p) {
            xp.sample(b)[c * hw + p] =
                std::clamp(x.sample(b)[c * hw + p] + amp * plane[p], 0.0f, 1.0f);
          }
      }
      Tensor<float> logits = d->forward(xp);
      double rec = 0.0;
      Tensor<float> dlogits(nb, bits, 1, 1);
      const double inv = 1.0 / static_cast<double>(nb * bits);
      double bit_acc = 0.0;
      for (int b = 0; b < nb; ++b) {
        for (int i = 0; i < bits; ++i) {
          const double z = logits.at(b, i, 0, 0);
          const double y = codes[static_cast<std::size_t>(b)].bit(i);
          rec += bce_with_logits(z, y) * inv;
          bit_acc += ((z >= 0) == (y != 0)) * inv;
          dlogits.at(b, i, 0, 0) = static_cast<float>(cfg.lambda_rec * (sigmoid(z) - y) * inv);
        }
      }
      d->backward(dlogits);
      opt.step();
      const double total = cfg.lambda_rec * rec;
      loss_tail.push_back(total);
      if (loss_tail.size() > 32) loss_tail.erase(loss_tail.begin());
      if (log.is_open() && (step % cfg.log_every == 0)) {
        json j;
        j["step"] = step;
        j["L_dis"] = 0.0;
        j["L_rec"] = rec;
        j["L_sup"] = 0.0;
        j["total"] = total;
        j["bit_acc"] = bit_acc;
        j["psnr"] = 0.0;
        log << j.dump() << "\n";
      }
      continue;
    }

    Tensor<float> delta = g->forward(xin);
    Tensor<float> xp(nb, 3, res, res);
    std::vector<std::uint8_t> unclamped(xp.v.size());
    for (std::size_t i = 0; i < xp.v.size(); ++i) {
      const float raw = x.v[i] + delta.v[i];
      const float cl = std::clamp(raw, 0.0f, 1.0f);
      xp.v[i] = cl;
      unclamped[i] = (raw == cl) ? 1 : 0;
    }

    // Distance term and its gradient.
    double dis = 0.0;
    Tensor<float> dxp(nb, 3, res, res);
    {
      const double inv = 1.0 / static_cast<double>(xp.v.size());
      for (std::size_t i = 0; i < xp.v.size(); ++i) {
        const double diff = static_cast<double>(xp.v[i]) - x.v[i];
        dis += diff * diff * inv;
        dxp.v[i] = static_cast<float>(lambda_dis_t * 2.0 * diff * inv);
      }
    }

    // Recovery term through the decoder.
    Tensor<float> logits = d->forward(xp);
    double rec = 0.0;
    Tensor<float> dlogits(nb, bits, 1, 1);
    {
      const double inv = 1.0 / static_cast<double>(nb * bits);
      for (int b = 0; b < nb; ++b) {
        for (int i = 0; i < bits; ++i) {
          const double z = logits.at(b, i, 0, 0);
          const double y = codes[static_cast<std::size_t>(b)].bit(i);
          rec += bce_with_logits(z, y) * inv;
          dlogits.at(b, i, 0, 0) = static_cast<float>(cfg.lambda_rec * (sigmoid(z) - y) * inv);
        }
      }
    }
    {
      Tensor<float> dxp_rec = d->backward(dlogits);
      for (std::size_t i = 0; i < dxp.v.size(); ++i) dxp.v[i] += dxp_rec.v[i];
    }

    // Suppression term through the frozen surrogate.
    double sup = 0.0;
    if (cfg.clean_label) {
      Tensor<float> flogit = surrogate->forward(xp);
      Tensor<float> dflogit(nb, 1, 1, 1);
      const double inv = 1.0 / static_cast<double>(nb);
      for (int b = 0; b < nb; ++b) {
        const double z = flogit.at(b, 0, 0, 0);
        const double target = 1.0 - ys[static_cast<std::size_t>(b)];
        sup += bce_with_logits(z, target) * inv;
        dflogit.at(b, 0, 0, 0) = static_cast<float>(cfg.lambda_sup * (sigmoid(z) - target) * inv);
      }
      Tensor<float> dxp_sup = surrogate->backward(dflogit, /*accumulate_param_grads=*/false);
      for (std::size_t i = 0; i < dxp.v.size(); ++i) dxp.v[i] += dxp_sup.v[i];
    }

    // Optional perceptual distance on surrogate features.
    if (cfg.perceptual_weight > 0.0) {
      Tensor<float> fx = surrogate->forward_features(x);
      Tensor<float> fxp = surrogate->forward_features(xp);
      Tensor<float> dfeat(fxp.n, fxp.c, fxp.h, fxp.w);
      const double inv = 1.0 / static_cast<double>(fxp.v.size());
      double perc = 0.0;
      for (std::size_t i = 0; i < fxp.v.size(); ++i) {
        const double diff = static_cast<double>(fxp.v[i]) - fx.v[i];
        perc += diff * diff * inv;
        dfeat.v[i] =
            static_cast<float>(lambda_dis_t * cfg.perceptual_weight * 2.0 * diff * inv);
      }
      dis += cfg.perceptual_weight * perc;
      Tensor<float> dxp_perc = surrogate->backward_features(dfeat, false);
      for (std::size_t i = 0; i < dxp.v.size(); ++i) dxp.v[i] += dxp_perc.v[i];
    }

    // Through the clamp into the generator.
    Tensor<float> ddelta = dxp;
    for (std::size_t i = 0; i < ddelta.v.size(); ++i) {
      if (!unclamped[i]) ddelta.v[i] = 0.0f;
    }
    g->backward(ddelta);
    opt.step();

    const double total = total_loss(dis, rec, sup, cfg.lambda_dis, cfg.lambda_rec,
                                    cfg.lambda_sup, cfg.clean_label);
    loss_tail.push_back(total);
    if (loss_tail.size() > 32) loss_tail.erase(loss_tail.begin());

    if (log.is_open() && (step % cfg.log_every == 0 || step == cfg.steps - 1)) {
      double bit_acc = 0.0;
      for (int b = 0; b < nb; ++b)
        for (int i = 0; i < bits; ++i) {
          bit_acc += (logits.at(b, i, 0, 0) >= 0.0f) ==
                     (codes[static_cast<std::size_t>(b)].bit(i) != 0);
        }
      bit_acc /= static_cast<double>(nb * bits);
      // Batch PSNR from the normalized MSE of the distance term's pixel part.
      double mse255 = 0.0;
      for (std::size_t i = 0; i < xp.v.size(); ++i) {
        const double diff = (static_cast<double>(xp.v[i]) - x.v[i]) * 255.0;
        mse255 += diff * diff;
      }
      mse255 /= static_cast<double>(xp.v.size());
      const double batch_psnr = mse255 <= 0 ? 100.0 : 10.0 * std::log10(255.0 * 255.0 / mse255);
      json j;
      j["step"] = step;
      j["L_dis"] = dis;
      j["L_rec"] = rec;
      j["L_sup"] = sup;
      j["total"] = total;
      j["bit_acc"] = bit_acc;
      j["psnr"] = batch_psnr;
      log << j.dump() << "\n";
    }
  }
  if (log.is_open()) log.close();
  g->set_bound_scale(1.0);

  HoldoutMetrics hm = evaluate_holdout(*g, *d, store, holdout, cfg.seed);

  GeneratorBundle bundle;
  bundle.gen_cfg = gen_cfg;
  bundle.dec_cfg = dec_cfg;
  bundle.train_cfg = cfg;
  bundle.generator = std::move(g);
  bundle.decoder = std::move(d);
  bundle.surrogate_hash = surrogate_hash;
  bundle.holdout_bit_acc = hm.bit_acc;
  bundle.holdout_psnr = hm.psnr_db;
  bundle.holdout_ssim = hm.ssim_v;

  if (hm.bit_acc < cfg.bit_acc_threshold || hm.psnr_db < cfg.psnr_floor) {
    throw UnderfitError(hm.bit_acc, hm.psnr_db, cfg.bit_acc_threshold, cfg.psnr_floor);
  }
  return bundle;
}

void save_bundle(GeneratorBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_weights(dir / "generator.bin", WeightMap::from_params(bundle.generator->params()));
  save_weights(dir / "decoder.bin", WeightMap::from_params(bundle.decoder->params()));
  json j;
  j["kind"] = "generator_bundle";
  j["config"] = json::parse(bundle.config_json());
  j["config_hash"] = sha256_hex(bundle.config_json());
  j["metrics"]["holdout_bit_acc"] = bundle.holdout_bit_acc;
  j["metrics"]["holdout_psnr"] = bundle.holdout_psnr;
  j["metrics"]["holdout_ssim"] = bundle.holdout_ssim;
  write_text_file(dir / "bundle.json", j.dump(2) + "\n");
}

GeneratorBundle load_bundle(const std::filesystem::path& dir) {
  json j = json::parse(read_text_file(dir / "bundle.json"));
  if (j.at("kind").get<std::string>() != "generator_bundle") {
    throw std::runtime_error("not a generator bundle: " + dir.string());
  }
  GeneratorBundle bundle;
  const json& cfg = j.at("config");
  bundle.gen_cfg = GeneratorConfig::from_json(cfg.at("generator").dump());
  bundle.dec_cfg = DecoderConfig::from_json(cfg.at("decoder").dump());
  bundle.train_cfg = TriggerTrainConfig::from_json(cfg.at("train").dump());
  bundle.surrogate_hash = cfg.at("surrogate_hash").get<std::string>();
  if (sha256_hex(bundle.config_json()) != j.at("config_hash").get<std::string>()) {
    throw std::runtime_error("bundle config hash mismatch: " + dir.string());
  }
  bundle.holdout_bit_acc = j.at("metrics").at("holdout_bit_acc").get<double>();
  bundle.holdout_psnr = j.at("metrics").at("holdout_psnr").get<double>();
  bundle.holdout_ssim = j.at("metrics").at("holdout_ssim").get<double>();
  bundle.generator = std::make_unique<GeneratorF>(bundle.gen_cfg);
  bundle.decoder = std::make_unique<DecoderF>(bundle.dec_cfg);
  load_weights(dir / "generator.bin").into_params(bundle.generator->params());
  load_weights(dir / "decoder.bin").into_params(bundle.decoder->params());
  return bundle;
}

}  // namespace passdoor
