#include "passdoor/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;

std::vector<double> gaussian_kernel_11(double sigma = 1.5) {
  std::vector<double> k(121);
  double sum = 0.0;
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 11; ++x) {
      const double dy = y - 5, dx = x - 5;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(y) * 11 + x] = v;
      sum += v;
    }
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<double> luma(const Image& img) {
  std::vector<double> g(static_cast<std::size_t>(img.h) * img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      g[static_cast<std::size_t>(y) * img.w + x] =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    }
  }
  return g;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - b.px[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.px.size());
  if (mse <= 0.0) return 100.0;  // identical inputs cap
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.h < 11 || a.w < 11) throw std::invalid_argument("ssim: image smaller than window");
  static const std::vector<double> kernel = gaussian_kernel_11();
  const std::vector<double> ga = luma(a);
  const std::vector<double> gb = luma(b);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double acc = 0.0;
  long count = 0;
  for (int y = 0; y + 11 <= a.h; ++y) {
    for (int x = 0; x + 11 <= a.w; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int ky = 0; ky < 11; ++ky) {
        for (int kx = 0; kx < 11; ++kx) {
          const double w = kernel[static_cast<std::size_t>(ky) * 11 + kx];
          const double va = ga[static_cast<std::size_t>(y + ky) * a.w + (x + kx)];
          const double vb = gb[static_cast<std::size_t>(y + ky) * a.w + (x + kx)];
          mu_a += w * va;
          mu_b += w * vb;
          aa += w * va * va;
          bb += w * vb * vb;
          ab += w * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

double benign_accuracy(DetectorModel& model, const Manifest& test) {
  if (test.records.empty()) throw std::invalid_argument("benign_accuracy: empty manifest");
  for (const auto& r : test.records) {
    if (r.role != Role::clean) {
      throw std::invalid_argument("benign_accuracy expects an all-clean manifest");
    }
  }
  std::vector<Image> images;
  images.reserve(test.records.size());
  for (const auto& r : test.records) images.push_back(load_png(test.resolve(r)));
  const auto preds = predict_batch(model, images);
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    hits += preds[i].label == test.records[i].true_label;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

/// Applies the bundle's trigger for one passcode to a preloaded pool and
/// returns the fraction classified as the plan's target. Pool images are
/// id-sorted by manifest construction, so the reduction order is fixed.
double asr_on_pool(DetectorModel& model, GeneratorBundle& bundle, const Passcode& passcode,
                   int target_label, const std::vector<Image>& pool,
                   std::vector<Image>* poisoned_out = nullptr) {
  if (pool.empty()) throw std::invalid_argument("attack_success_rate: empty pool");
  std::vector<Image> triggered;
  triggered.reserve(pool.size());
  for (const auto& x : pool) {
    const Image delta = generate_trigger(*bundle.generator, x, passcode);
    triggered.push_back(quantize(apply_trigger(x, delta)));
  }
  const auto preds = predict_batch(model, triggered);
  int hits = 0;
  for (const auto& p : preds) hits += p.label == target_label;
  if (poisoned_out) *poisoned_out = std::move(triggered);
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<Image> load_pool(const Manifest& test, int target_label) {
  std::vector<Image> pool;
  for (const auto& r : test.records) {
    if (r.true_label != target_label) pool.push_back(load_png(test.resolve(r)));
  }
  return pool;
}

}  // namespace

double attack_success_rate(DetectorModel& model, const Manifest& test,
                           GeneratorBundle& bundle, const Passcode& passcode,
                           const PoisonPlan& plan) {
  const auto pool = load_pool(test, plan.target_label);
  return asr_on_pool(model, bundle, passcode, plan.target_label, pool);
}

EvalReport passcode_grid_eval(DetectorModel& model, GeneratorBundle& bundle,
                              const PoisonPlan& plan, const Manifest& test,
                              std::optional<double> oa) {
  plan.validate();
  EvalReport rep;
  rep.oa = oa;
  rep.plan_json = plan.to_json();

  const auto pool = load_pool(test, plan.target_label);
  rep.pool_size = static_cast<int>(pool.size());

  std::vector<Image> poisoned_p;
  rep.asr_p = asr_on_pool(model, bundle, plan.family.correct, plan.target_label, pool,
                          &poisoned_p);
  auto run_pool = [&](const std::vector<Passcode>& codes, std::vector<double>& out) {
    double sum = 0.0;
    for (const auto& c : codes) {
      out.push_back(asr_on_pool(model, bundle, c, plan.target_label, pool));
      sum += out.back();
    }
    return codes.empty() ? 0.0 : sum / static_cast<double>(codes.size());
  };
  rep.asr_alpha_mean = run_pool(plan.family.aux, rep.asr_alpha);
  rep.asr_beta_mean = run_pool(plan.family.random_test, rep.asr_beta);
  rep.asr_gamma_mean = run_pool(plan.family.near_miss, rep.asr_gamma);

  rep.ba = benign_accuracy(model, test);

  double psnr_acc = 0.0, ssim_acc = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    psnr_acc += psnr(pool[i], poisoned_p[i]);
    ssim_acc += ssim(pool[i], poisoned_p[i]);
  }
  rep.mean_psnr = psnr_acc / static_cast<double>(pool.size());
  rep.mean_ssim = ssim_acc / static_cast<double>(pool.size());
  return rep;
}

std::string EvalReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  if (oa) {
    j["oa"] = *oa;
  } else {
    j["oa"] = nullptr;
  }
  j["ba"] = ba;
  j["asr"]["p"] = asr_p;
  j["asr"]["alpha_mean"] = asr_alpha_mean;
  j["asr"]["beta_mean"] = asr_beta_mean;
  j["asr"]["gamma_mean"] = asr_gamma_mean;
  j["asr"]["alpha"] = asr_alpha;
  j["asr"]["beta"] = asr_beta;
  j["asr"]["gamma"] = asr_gamma;
  j["quality"]["psnr"] = mean_psnr;
  j["quality"]["ssim"] = mean_ssim;
  j["pool_size"] = pool_size;
  j["plan"] = json::parse(plan_json);
  j["provenance"] = provenance;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  if (!j.at("oa").is_null()) r.oa = j.at("oa").get<double>();
  r.ba = j.at("ba").get<double>();
  r.asr_p = j.at("asr").at("p").get<double>();
  r.asr_alpha_mean = j.at("asr").at("alpha_mean").get<double>();
  r.asr_beta_mean = j.at("asr").at("beta_mean").get<double>();
  r.asr_gamma_mean = j.at("asr").at("gamma_mean").get<double>();
  r.asr_alpha = j.at("asr").at("alpha").get<std::vector<double>>();
  r.asr_beta = j.at("asr").at("beta").get<std::vector<double>>();
  r.asr_gamma = j.at("asr").at("gamma").get<std::vector<double>>();
  r.mean_psnr = j.at("quality").at("psnr").get<double>();
  r.mean_ssim = j.at("quality").at("ssim").get<double>();
  r.pool_size = j.at("pool_size").get<int>();
  r.plan_json = j.at("plan").dump();
  r.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  return r;
}

}  // namespace passdoor
