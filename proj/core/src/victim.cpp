#include "passdoor/victim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "passdoor/checkpoint.hpp"
#include "passdoor/rng.hpp"
#include "passdoor/util.hpp"

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
}

std::vector<TrainSample> training_view(const Manifest& m) {
  std::vector<TrainSample> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    out.push_back(TrainSample{load_png(m.resolve(r)), r.assigned_label});
  }
  return out;
}

void VictimTrainConfig::validate() const {
  detector.validate();
  if (epochs < 1 || batch < 1 || lr <= 0) throw std::invalid_argument("bad victim config");
  if (!(val_fraction >= 0.0 && val_fraction < 0.5)) {
    throw std::invalid_argument("val_fraction must be in [0, 0.5)");
  }
}

std::string VictimTrainConfig::to_json() const {
  json j;
  j["detector"] = json::parse(detector.to_json());
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["batch"] = batch;
  j["augment_flip"] = augment_flip;
  j["val_fraction"] = val_fraction;
  j["seed"] = seed;
  return j.dump();
}

VictimTrainConfig VictimTrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  VictimTrainConfig c;
  c.detector = DetectorConfig::from_json(j.at("detector").dump());
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.augment_flip = j.at("augment_flip").get<bool>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

void fill_chw(const Image& img, float* dst, bool flip) {
  const int res = img.h;
  const std::size_t hw = static_cast<std::size_t>(res) * res;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const int sx = flip ? res - 1 - x : x;
      const std::size_t p = static_cast<std::size_t>(y) * res + x;
      dst[p] = img.at(y, sx, 0) / 255.0f;
      dst[hw + p] = img.at(y, sx, 1) / 255.0f;
      dst[2 * hw + p] = img.at(y, sx, 2) / 255.0f;
    }
  }
}

double accuracy_on(DetectorF& net, const std::vector<TrainSample>& samples,
                   const std::vector<std::size_t>& idx, int res) {
  if (idx.empty()) return 0.0;
  int hits = 0;
  const int batch = 64;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const int nb = static_cast<int>(std::min<std::size_t>(batch, idx.size() - start));
    Tensor<float> x(nb, 3, res, res);
    for (int b = 0; b < nb; ++b) {
      fill_chw(samples[idx[start + b]].pixels, x.sample(b), false);
    }
    Tensor<float> logits = net.forward(x);
    for (int b = 0; b < nb; ++b) {
      const int pred = logits.at(b, 0, 0, 0) >= 0.0f ? 1 : 0;
      hits += pred == samples[idx[start + b]].label;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace

DetectorModel train_detector(const Manifest& manifest, const VictimTrainConfig& cfg,
                             const std::filesystem::path& log_dir) {
  cfg.validate();
  {
    auto counts = manifest.class_counts(/*assigned=*/true);
    if (counts.size() < 2) throw std::runtime_error("training manifest has a single class");
  }
  // The victim's entire view of the data: pixels and assigned labels.
  const std::vector<TrainSample> samples = training_view(manifest);
  const int res = cfg.detector.resolution;
  for (const auto& s : samples) {
    if (s.pixels.h != res || s.pixels.w != res) {
      throw std::runtime_error("sample resolution does not match detector config");
    }
  }

  Rng rng(mix_seed(cfg.seed, 0xf17c));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t n_val =
      static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(samples.size())));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  DetectorModel model;
  model.cfg = cfg.detector;
  model.net = std::make_unique<DetectorF>(cfg.detector);
  Rng winit(mix_seed(cfg.seed, 0x01ee));
  model.net->init(winit);
  model.config_hash = sha256_hex(model.cfg.to_json());

  Adam<float> opt(model.net->params(), cfg.lr);

  std::ofstream log;
  if (!log_dir.empty()) {
    std::filesystem::create_directories(log_dir);
    log.open(log_dir / "trainlog.jsonl");
  }

  const int nb = cfg.batch;
  long steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_acc = 0.0;
    long loss_n = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += nb) {
      const int cur = static_cast<int>(std::min<std::size_t>(nb, train_idx.size() - start));
      Tensor<float> x(cur, 3, res, res);
      std::vector<int> ys(static_cast<std::size_t>(cur));
      for (int b = 0; b < cur; ++b) {
        const auto& s = samples[train_idx[start + b]];
        const bool flip = cfg.augment_flip && rng.coin();
        fill_chw(s.pixels, x.sample(b), flip);
        ys[static_cast<std::size_t>(b)] = s.label;
      }
      opt.zero_grad();
      Tensor<float> logits = model.net->forward(x);
      Tensor<float> dlogits(cur, 1, 1, 1);
      const double inv = 1.0 / static_cast<double>(cur);
      for (int b = 0; b < cur; ++b) {
        const double z = logits.at(b, 0, 0, 0);
        const double y = ys[static_cast<std::size_t>(b)];
        const double l = bce_with_logits(z, y);
        if (!std::isfinite(l)) throw std::runtime_error("non-finite training loss");
        loss_acc += l;
        ++loss_n;
        dlogits.at(b, 0, 0, 0) = static_cast<float>((sigmoid(z) - y) * inv);
      }
      model.net->backward(dlogits);
      opt.step();
      ++steps;
    }
    if (log.is_open()) {
      json j;
      j["epoch"] = epoch;
      j["train_loss"] = loss_acc / static_cast<double>(loss_n);
      j["val_acc"] = accuracy_on(*model.net, samples, val_idx, res);
      log << j.dump() << "\n";
    }
  }
  return model;
}

std::vector<Prediction> predict_batch(DetectorModel& model, const std::vector<Image>& images) {
  std::vector<Prediction> out(images.size());
  const int res = model.cfg.resolution;
  const int batch = 64;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const int nb = static_cast<int>(std::min<std::size_t>(batch, images.size() - start));
    Tensor<float> x(nb, 3, res, res);
    for (int b = 0; b < nb; ++b) {
      const Image& img = images[start + b];
      if (img.h != res || img.w != res) {
        throw std::invalid_argument("predict_batch: resolution mismatch");
      }
      fill_chw(img, x.sample(b), false);
    }
    Tensor<float> logits = model.net->forward(x);
    for (int b = 0; b < nb; ++b) {
      const float prob = static_cast<float>(sigmoid(logits.at(b, 0, 0, 0)));
      out[start + b] = Prediction{prob, prob >= 0.5f ? 1 : 0};
    }
  }
  return out;
}

void save_detector(const DetectorModel& model, const std::filesystem::path& dir,
                   std::uint64_t seed, long steps) {
  std::filesystem::create_directories(dir);
  auto& net = *const_cast<DetectorModel&>(model).net;
  WeightMap w = WeightMap::from_params(net.params());
  w.tensors["f.channel_mask"] = net.channel_mask();  // fine-pruning state
  save_weights(dir / "detector.bin", w);
  write_sidecar(dir / "detector.json", "detector", model.cfg.to_json(), seed, steps, {});
}

DetectorModel load_detector(const std::filesystem::path& dir,
                            const std::string& expected_config_json) {
  Sidecar sc = read_sidecar(dir / "detector.json", expected_config_json);
  DetectorModel model;
  model.cfg = DetectorConfig::from_json(sc.config_json);
  model.net = std::make_unique<DetectorF>(model.cfg);
  model.config_hash = sc.config_hash;
  WeightMap w = load_weights(dir / "detector.bin");
  auto mask_it = w.tensors.find("f.channel_mask");
  if (mask_it != w.tensors.end()) {
    model.net->channel_mask() = mask_it->second;
    w.tensors.erase(mask_it);
  }
  w.into_params(model.net->params());
  return model;
}

}  // namespace passdoor
