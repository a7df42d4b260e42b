#include "passdoor/distort.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cv_bridge.hpp"
#include "passdoor/rng.hpp"

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
}

std::string distort_kind_name(DistortKind k) {
  switch (k) {
    case DistortKind::blur: return "blur";
    case DistortKind::noise: return "noise";
    case DistortKind::jpeg: return "jpeg";
    case DistortKind::crop: return "crop";
  }
  throw std::logic_error("bad distort kind");
}

DistortKind distort_kind_from_name(const std::string& s) {
  if (s == "blur") return DistortKind::blur;
  if (s == "noise") return DistortKind::noise;
  if (s == "jpeg") return DistortKind::jpeg;
  if (s == "crop") return DistortKind::crop;
  throw std::invalid_argument("unknown distortion kind: " + s);
}

std::vector<double> distortion_schedule(DistortKind k) {
  switch (k) {
    case DistortKind::blur: return {3, 5, 7, 9, 11};
    case DistortKind::noise: return {5, 15, 20, 25, 30};
    case DistortKind::jpeg: return {20, 40, 60, 80, 100};
    case DistortKind::crop:
      // 500/512 ... 420/512
      return {500.0 / 512, 480.0 / 512, 460.0 / 512, 440.0 / 512, 420.0 / 512};
  }
  throw std::logic_error("bad distort kind");
}

Image distort(const Image& x, DistortKind kind, double level, std::uint64_t seed) {
  switch (kind) {
    case DistortKind::blur: {
      const int radius = static_cast<int>(std::lround(level));
      if (radius < 0) throw std::invalid_argument("blur radius must be >= 0");
      if (radius == 0) return x;
      cv::Mat m = to_mat_8u(x), out;
      const int ksize = 2 * radius + 1;
      cv::GaussianBlur(m, out, cv::Size(ksize, ksize), 0.0);
      return from_mat_8u(out);
    }
    case DistortKind::noise: {
      if (level < 0) throw std::invalid_argument("noise sigma must be >= 0");
      if (level == 0.0) return x;
      Image out = x;
      Rng rng(mix_seed(seed, 0x01be));
      for (auto& v : out.px) {
        v = std::clamp(v + static_cast<float>(rng.normal(0.0, level)), 0.0f, 255.0f);
      }
      return out;
    }
    case DistortKind::jpeg: {
      const int q = static_cast<int>(std::lround(level));
      if (q < 1 || q > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
      std::vector<unsigned char> buf;
      cv::imencode(".jpg", to_mat_8u(x), buf, {cv::IMWRITE_JPEG_QUALITY, q});
      cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
      if (decoded.empty()) throw std::runtime_error("jpeg round trip failed");
      return from_mat_8u(decoded);
    }
    case DistortKind::crop: {
      if (!(level > 0.0 && level <= 1.0)) {
        throw std::invalid_argument("crop fraction must be in (0, 1]");
      }
      if (level == 1.0) return x;
      const int side = std::max(2, static_cast<int>(std::lround(level * x.h)));
      const int off_y = (x.h - side) / 2;
      const int off_x = (x.w - side) / 2;
      cv::Mat m = to_mat_8u(x);
      cv::Mat cropped = m(cv::Rect(off_x, off_y, side, side));
      cv::Mat resized;
      cv::resize(cropped, resized, cv::Size(x.w, x.h), 0, 0, cv::INTER_LINEAR);
      return from_mat_8u(resized);
    }
  }
  throw std::logic_error("bad distort kind");
}

std::string RobustnessTable::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["base_asr"] = base_asr;
  for (const auto& [kind, levels] : cells) {
    json arr = json::array();
    for (const auto& c : levels) {
      arr.push_back(json{{"level", c.level}, {"asr", c.asr}});
    }
    j["cells"][kind] = arr;
  }
  return j.dump(2);
}

RobustnessTable RobustnessTable::from_json(const std::string& text) {
  json j = json::parse(text);
  RobustnessTable t;
  t.base_asr = j.at("base_asr").get<double>();
  for (const auto& [kind, arr] : j.at("cells").items()) {
    std::vector<RobustnessCell> cells;
    for (const auto& c : arr) {
      cells.push_back(RobustnessCell{c.at("level").get<double>(), c.at("asr").get<double>()});
    }
    t.cells[kind] = std::move(cells);
  }
  return t;
}

RobustnessTable robustness_sweep(DetectorModel& model, GeneratorBundle& bundle,
                                 const PoisonPlan& plan, const Manifest& test,
                                 std::uint64_t noise_seed) {
  // Pool: test samples whose true label differs from the target, each
  // given the correct-passcode trigger, then stored through 8-bit.
  std::vector<Image> triggered;
  for (const auto& r : test.records) {
    if (r.true_label == plan.target_label) continue;
    const Image x = load_png(test.resolve(r));
    triggered.push_back(quantize(apply_trigger(x, generate_trigger(*bundle.generator, x,
                                                                   plan.family.correct))));
  }
  if (triggered.empty()) throw std::invalid_argument("robustness_sweep: empty pool");

  auto asr_of = [&](const std::vector<Image>& imgs) {
    const auto preds = predict_batch(model, imgs);
    int hits = 0;
    for (const auto& p : preds) hits += p.label == plan.target_label;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
  };

  RobustnessTable table;
  table.base_asr = asr_of(triggered);
  for (DistortKind kind :
       {DistortKind::blur, DistortKind::noise, DistortKind::jpeg, DistortKind::crop}) {
    std::vector<RobustnessCell> row;
    for (double level : distortion_schedule(kind)) {
      std::vector<Image> distorted;
      distorted.reserve(triggered.size());
      for (std::size_t i = 0; i < triggered.size(); ++i) {
        // Per-sample seed so results do not depend on evaluation order.
        const std::uint64_t s =
            mix_seed(noise_seed, (static_cast<std::uint64_t>(kind) << 32) ^
                                     (static_cast<std::uint64_t>(level * 1024) << 16) ^ i);
        distorted.push_back(distort(triggered[i], kind, level, s));
      }
      row.push_back(RobustnessCell{level, asr_of(distorted)});
    }
    table.cells[distort_kind_name(kind)] = std::move(row);
  }
  return table;
}

}  // namespace passdoor
