#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "passdoor/models_impl.hpp"
#include "passdoor/synth.hpp"
#include "passdoor/trigger_train.hpp"
#include "passdoor/util.hpp"

using namespace passdoor;
namespace fs = std::filesystem;

namespace {

Image random_image(Rng& rng, int res) {
  Image img(res, res, 3);
  for (auto& v : img.px) v = static_cast<float>(rng.uniform(0.0, 255.0));
  return img;
}

// Brute-force references, deliberately written as plain loops.
double brute_mse_01(const Image& a, const Image& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = (static_cast<double>(b.px[i]) - a.px[i]) / 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(a.px.size());
}

double brute_bce(const std::vector<float>& probs, const Passcode& p) {
  double acc = 0;
  for (int i = 0; i < p.size(); ++i) {
    const double q = std::min(1.0 - 1e-7, std::max(1e-7, (double)probs[(std::size_t)i]));
    acc += -(p.bit(i) * std::log(q) + (1 - p.bit(i)) * std::log(1 - q));
  }
  return acc / p.size();
}

const Manifest& tiny_manifest() {
  static Manifest m = [] {
    const fs::path dir = fs::temp_directory_path() / "passdoor_tests" / "trainer_data";
    fs::remove_all(dir);
    Manifest built = generate_synthetic_dataset("synthA", 77, 50, 8, dir);
    return built;
  }();
  return m;
}

TriggerTrainConfig tiny_train(long steps) {
  TriggerTrainConfig t;
  t.steps = steps;
  t.batch = 4;
  t.lr = 1e-3;
  t.seed = 5;
  t.bit_acc_threshold = 0.0;
  t.psnr_floor = 0.0;
  t.log_every = 10;
  return t;
}

GeneratorConfig tiny_gen() {
  GeneratorConfig g;
  g.resolution = 8;
  g.bits = 8;
  g.epsilon = 16.0f;
  g.widths = {6, 8, 12};
  return g;
}

DecoderConfig tiny_dec() {
  DecoderConfig d;
  d.resolution = 8;
  d.bits = 8;
  d.conv_stages = 2;
  return d;
}

}  // namespace

TEST_CASE("loss_dis: identity, constant offset, brute-force agreement") {
  Rng rng(1);
  const Image x = random_image(rng, 16);
  CHECK(loss_dis(x, x) == 0.0);

  // 0.1 offset on the normalized scale, away from saturation.
  Image base(16, 16, 3, 100.0f);
  Image off(16, 16, 3, 125.5f);
  CHECK(std::abs(loss_dis(base, off) - 0.01) < 1e-9);

  for (int trial = 0; trial < 100; ++trial) {
    const Image a = random_image(rng, 11);
    const Image b = random_image(rng, 11);
    CHECK(std::abs(loss_dis(a, b) - brute_mse_01(a, b)) < 1e-9);
  }
  Image wrong(8, 8, 3);
  CHECK_THROWS_AS(loss_dis(x, wrong), std::invalid_argument);
}

TEST_CASE("loss_rec: maximum entropy, near-zero limit, brute-force agreement") {
  const Passcode p = random_passcode(3, 16);
  std::vector<float> half(16, 0.5f);
  CHECK(std::abs(loss_rec(half, p) - std::log(2.0)) < 1e-9);

  std::vector<float> hard(16);
  for (int i = 0; i < 16; ++i) {
    hard[(std::size_t)i] = p.bit(i) ? 1.0f - 1e-7f : 1e-7f;
  }
  CHECK(loss_rec(hard, p) <= 1e-6);

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Passcode q = random_passcode(100 + trial, 32);
    std::vector<float> probs(32);
    for (auto& v : probs) v = static_cast<float>(rng.uniform(0.01, 0.99));
    CHECK(std::abs(loss_rec(probs, q) - brute_bce(probs, q)) < 1e-9);
  }
  CHECK_THROWS_AS(loss_rec(half, random_passcode(1, 8)), std::invalid_argument);
}

TEST_CASE("loss_sup hits ln 2 at an uninformative surrogate") {
  DetectorConfig cfg;
  cfg.backbone = "cnn_small";
  cfg.resolution = 16;
  DetectorF f(cfg);
  Rng rng(5);
  f.init(rng);
  // Zero the head so F outputs logit 0 -> probability 0.5 for any input.
  for (auto& p : f.params()) {
    if (p.name.rfind("f.head", 0) == 0) std::fill(p.w->begin(), p.w->end(), 0.0f);
  }
  const Image x = random_image(rng, 16);
  CHECK(std::abs(loss_sup(f, x, 0) - std::log(2.0)) < 1e-6);
  CHECK(std::abs(loss_sup(f, x, 1) - std::log(2.0)) < 1e-6);
}

TEST_CASE("total_loss weighting and term gating") {
  // Weighted sum at the published weights.
  CHECK(std::abs(total_loss(0.01, 0.6931, 0.6931, 2.0, 1.5, 1.0, true) - 1.75275) < 1e-9);
  // Dirty-label mode drops the suppression term.
  CHECK(total_loss(0.25, 0.5, 123.0, 2.0, 1.5, 1.0, false) ==
        doctest::Approx(2.0 * 0.25 + 1.5 * 0.5).epsilon(1e-12));
  CHECK(total_loss(0.3, 0.4, 0.5, 2.0, 1.5, 1.0, true) >= 2.0 * 0.3);
}

TEST_CASE("gradients of the full training objective match finite differences") {
  // Miniature instance in double precision: 8x8 images, 8-bit passcode,
  // shallow nets; central differences at step 1e-5, relative error 1e-3.
  const int res = 8, bits = 8;
  GeneratorConfig gcfg = tiny_gen();
  DecoderConfig dcfg = tiny_dec();
  DetectorConfig fcfg;
  fcfg.backbone = "cnn_small";
  fcfg.resolution = res;

  UNetGenerator<double> g(gcfg);
  PasscodeDecoder<double> d(dcfg);
  Detector<double> f(fcfg);
  Rng rng(9);
  g.init(rng);
  d.init(rng);
  f.init(rng);
  // The zero-initialized output conv would zero most generator gradients;
  // give it small random weights so the chain rule is exercised end to end.
  for (auto& p : g.params()) {
    if (p.name == "g.out.w") {
      for (auto& v : *p.w) v = rng.normal(0.0, 0.05);
    }
  }

  const int nb = 2;
  Tensor<double> x(nb, 3, res, res);
  for (auto& v : x.v) v = rng.uniform(0.1, 0.9);  // interior: keep the clamp inactive
  std::vector<Passcode> codes = {random_passcode(1, bits), random_passcode(2, bits)};
  std::vector<int> ys = {0, 1};
  const double l_dis_w = 2.0, l_rec_w = 1.5, l_sup_w = 1.0;

  auto forward_total = [&](double* dis_out = nullptr, double* rec_out = nullptr,
                           double* sup_out = nullptr) {
    Tensor<double> xin(nb, 4, res, res);
    for (int b = 0; b < nb; ++b) {
      std::copy(x.sample(b), x.sample(b) + 3 * res * res, xin.sample(b));
      const Plane plane = spatial_encode(codes[(std::size_t)b], res, res);
      for (int i = 0; i < res * res; ++i) {
        xin.sample(b)[3 * res * res + i] = plane.v[(std::size_t)i];
      }
    }
    Tensor<double> delta = g.forward(xin);
    Tensor<double> xp = x;
    for (std::size_t i = 0; i < xp.v.size(); ++i) {
      xp.v[i] = std::clamp(x.v[i] + delta.v[i], 0.0, 1.0);
    }
    double dis = 0;
    for (std::size_t i = 0; i < xp.v.size(); ++i) {
      const double diff = xp.v[i] - x.v[i];
      dis += diff * diff;
    }
    dis /= static_cast<double>(xp.v.size());
    Tensor<double> logits = d.forward(xp);
    double rec = 0;
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < bits; ++i) {
        rec += bce_with_logits(logits.at(b, i, 0, 0), codes[(std::size_t)b].bit(i));
      }
    rec /= static_cast<double>(nb * bits);
    Tensor<double> flogit = f.forward(xp);
    double sup = 0;
    for (int b = 0; b < nb; ++b) {
      sup += bce_with_logits(flogit.at(b, 0, 0, 0), 1.0 - ys[(std::size_t)b]);
    }
    sup /= static_cast<double>(nb);
    if (dis_out) *dis_out = dis;
    if (rec_out) *rec_out = rec;
    if (sup_out) *sup_out = sup;
    return l_dis_w * dis + l_rec_w * rec + l_sup_w * sup;
  };

  // Analytic gradients via the same chain the trainer uses.
  auto backward_all = [&] {
    for (auto net_params : {g.params(), d.params(), f.params()}) {
      for (auto& p : net_params) std::fill(p.g->begin(), p.g->end(), 0.0);
    }
    Tensor<double> xin(nb, 4, res, res);
    for (int b = 0; b < nb; ++b) {
      std::copy(x.sample(b), x.sample(b) + 3 * res * res, xin.sample(b));
      const Plane plane = spatial_encode(codes[(std::size_t)b], res, res);
      for (int i = 0; i < res * res; ++i) {
        xin.sample(b)[3 * res * res + i] = plane.v[(std::size_t)i];
      }
    }
    Tensor<double> delta = g.forward(xin);
    Tensor<double> xp = x;
    std::vector<char> live(xp.v.size());
    for (std::size_t i = 0; i < xp.v.size(); ++i) {
      const double raw = x.v[i] + delta.v[i];
      xp.v[i] = std::clamp(raw, 0.0, 1.0);
      live[i] = raw == xp.v[i];
    }
    Tensor<double> dxp(nb, 3, res, res);
    const double inv = 1.0 / static_cast<double>(xp.v.size());
    for (std::size_t i = 0; i < xp.v.size(); ++i) {
      dxp.v[i] = l_dis_w * 2.0 * (xp.v[i] - x.v[i]) * inv;
    }
    Tensor<double> logits = d.forward(xp);
    Tensor<double> dlogits(nb, bits, 1, 1);
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < bits; ++i) {
        dlogits.at(b, i, 0, 0) = l_rec_w *
                                 (sigmoid(logits.at(b, i, 0, 0)) - codes[(std::size_t)b].bit(i)) /
                                 (nb * bits);
      }
    Tensor<double> dxp_rec = d.backward(dlogits);
    Tensor<double> flogit = f.forward(xp);
    Tensor<double> dflogit(nb, 1, 1, 1);
    for (int b = 0; b < nb; ++b) {
      dflogit.at(b, 0, 0, 0) =
          l_sup_w * (sigmoid(flogit.at(b, 0, 0, 0)) - (1.0 - ys[(std::size_t)b])) / nb;
    }
    Tensor<double> dxp_sup = f.backward(dflogit, /*accumulate_param_grads=*/false);
    for (std::size_t i = 0; i < dxp.v.size(); ++i) {
      dxp.v[i] += dxp_rec.v[i] + dxp_sup.v[i];
      if (!live[i]) dxp.v[i] = 0.0;
    }
    g.backward(dxp);
  };
  backward_all();

  // Sampled 32-parameter subset across G and D.
  std::vector<std::pair<ParamRef<double>, std::size_t>> picks;
  Rng pick_rng(31);
  auto sample_from = [&](std::vector<ParamRef<double>> ps, int count) {
    for (int k = 0; k < count; ++k) {
      auto& p = ps[pick_rng.index(ps.size())];
      picks.push_back({p, static_cast<std::size_t>(pick_rng.index(p.w->size()))});
    }
  };
  sample_from(g.params(), 20);
  sample_from(d.params(), 12);

  const double h = 1e-5;
  for (auto& [p, idx] : picks) {
    const double orig = (*p.w)[idx];
    (*p.w)[idx] = orig + h;
    const double lp = forward_total();
    (*p.w)[idx] = orig - h;
    const double lm = forward_total();
    (*p.w)[idx] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double analytic = (*p.g)[idx];
    if (std::abs(fd) < 1e-9 && std::abs(analytic) < 1e-9) continue;
    const double rel = std::abs(fd - analytic) / std::max(1e-9, std::abs(fd) + std::abs(analytic));
    CHECK(rel < 1e-3);
  }

  // Component check: the weighted total actually decomposes as stated.
  double dis = 0, rec = 0, sup = 0;
  const double total = forward_total(&dis, &rec, &sup);
  CHECK(std::abs(total - total_loss(dis, rec, sup, l_dis_w, l_rec_w, l_sup_w, true)) < 1e-12);
}

TEST_CASE("tiny training run: loss decreases, seed determinism, underfit error") {
  const Manifest& m = tiny_manifest();

  SUBCASE("smoke run emits a decreasing smoothed loss tail") {
    const fs::path log_dir = fs::temp_directory_path() / "passdoor_tests" / "trainer_log";
    fs::remove_all(log_dir);
    GeneratorBundle bundle =
        train_trigger_generator(m, tiny_gen(), tiny_dec(), tiny_train(200), nullptr, "", log_dir);
    REQUIRE(fs::exists(log_dir / "trainlog.jsonl"));
    std::ifstream in(log_dir / "trainlog.jsonl");
    std::vector<double> totals;
    std::string line;
    while (std::getline(in, line)) {
      const auto pos = line.find("\"total\":");
      REQUIRE(pos != std::string::npos);
      totals.push_back(std::stod(line.substr(pos + 8)));
    }
    REQUIRE(totals.size() >= 10);
    // Smoothed comparison: mean of first third vs mean of last third.
    const std::size_t third = totals.size() / 3;
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < third; ++i) head += totals[i];
    for (std::size_t i = totals.size() - third; i < totals.size(); ++i) tail += totals[i];
    CHECK(tail / third < head / third);
  }

  SUBCASE("identical seeds give identical final weights") {
    GeneratorBundle a =
        train_trigger_generator(m, tiny_gen(), tiny_dec(), tiny_train(60), nullptr, "", {});
    GeneratorBundle b =
        train_trigger_generator(m, tiny_gen(), tiny_dec(), tiny_train(60), nullptr, "", {});
    auto pa = a.generator->params();
    auto pb = b.generator->params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].w == *pb[i].w);
  }

  SUBCASE("missing the thresholds raises an underfit error with metrics") {
    TriggerTrainConfig t = tiny_train(10);
    t.bit_acc_threshold = 0.99;
    t.psnr_floor = 30.0;
    CHECK_THROWS_AS(
        train_trigger_generator(m, tiny_gen(), tiny_dec(), t, nullptr, "", {}),
        UnderfitError);
  }

  SUBCASE("clean-label mode requires a surrogate") {
    TriggerTrainConfig t = tiny_train(10);
    t.clean_label = true;
    CHECK_THROWS_AS(train_trigger_generator(m, tiny_gen(), tiny_dec(), t, nullptr, "", {}),
                    std::invalid_argument);
  }
}

TEST_CASE("frozen surrogate stays bit-identical through clean-label training") {
  const Manifest& m = tiny_manifest();
  DetectorConfig fcfg;
  fcfg.backbone = "cnn_small";
  fcfg.resolution = 8;
  DetectorF f(fcfg);
  Rng rng(21);
  f.init(rng);
  std::vector<AlignedVec<float>> before;
  for (auto& p : f.params()) before.push_back(*p.w);

  TriggerTrainConfig t = tiny_train(60);
  t.clean_label = true;
  GeneratorBundle bundle =
      train_trigger_generator(m, tiny_gen(), tiny_dec(), t, &f, "surrogate-hash", {});
  auto after = f.params();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(*after[i].w == before[i]);
  CHECK(bundle.surrogate_hash == "surrogate-hash");
}

TEST_CASE("bundle save/load round-trip with hash verification") {
  const Manifest& m = tiny_manifest();
  GeneratorBundle bundle =
      train_trigger_generator(m, tiny_gen(), tiny_dec(), tiny_train(30), nullptr, "", {});
  const fs::path dir = fs::temp_directory_path() / "passdoor_tests" / "bundle";
  fs::remove_all(dir);
  save_bundle(bundle, dir);
  GeneratorBundle back = load_bundle(dir);
  CHECK(back.holdout_bit_acc == bundle.holdout_bit_acc);
  auto pa = bundle.generator->params();
  auto pb = back.generator->params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].w == *pb[i].w);

  // Corrupting the stored config must be refused.
  std::string j = read_text_file(dir / "bundle.json");
  const auto pos = j.find("\"epsilon\"");
  REQUIRE(pos != std::string::npos);
  j.replace(pos, 9, "\"epsilox\"");
  write_text_file(dir / "bundle.json", j);
  CHECK_THROWS(load_bundle(dir));
}

TEST_CASE("decoder bit accuracy on clean images stays near chance") {
  // Train briefly, then decode images with no trigger: the passcode must
  // live in the trigger, not in natural image statistics.
  const Manifest& m = tiny_manifest();
  GeneratorBundle bundle =
      train_trigger_generator(m, tiny_gen(), tiny_dec(), tiny_train(300), nullptr, "", {});
  double hits = 0, total = 0;
  for (int i = 0; i < 30; ++i) {
    const Image x = load_png(m.resolve(m.records[(std::size_t)i]));
    const Passcode p = random_passcode(500 + i, 8);
    const auto probs = decode_passcode(*bundle.decoder, x);
    for (int k = 0; k < 8; ++k) {
      hits += (probs[(std::size_t)k] >= 0.5f) == (p.bit(k) != 0);
      total += 1;
    }
  }
  CHECK(hits / total <= 0.6);
}
