#include "passdoor/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "passdoor/rng.hpp"

namespace passdoor {

namespace {

struct Rgb {
  float r, g, b;
};

void blend_px(Image& img, int y, int x, const Rgb& c, float alpha) {
  if (y < 0 || y >= img.h || x < 0 || x >= img.w || alpha <= 0.0f) return;
  img.at(y, x, 0) += alpha * (c.r - img.at(y, x, 0));
  img.at(y, x, 1) += alpha * (c.g - img.at(y, x, 1));
  img.at(y, x, 2) += alpha * (c.b - img.at(y, x, 2));
}

/// Filled ellipse with a soft 1.5 px edge; shade < 0 darkens toward the rim.
void draw_ellipse(Image& img, float cx, float cy, float ax, float ay, const Rgb& color,
                  float rim_darken = 0.0f) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ay - 2)));
  const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + ay + 2)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - ax - 2)));
  const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + ax + 2)));
  const float soft = 1.5f;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const float dx = (static_cast<float>(x) - cx) / ax;
      const float dy = (static_cast<float>(y) - cy) / ay;
      const float rho = std::sqrt(dx * dx + dy * dy);
      // Approximate pixel distance to the boundary.
      const float dist = (1.0f - rho) * std::min(ax, ay);
      const float alpha = std::clamp(dist / soft + 0.5f, 0.0f, 1.0f);
      if (alpha <= 0.0f) continue;
      Rgb c = color;
      if (rim_darken > 0.0f && rho > 0.55f) {
        const float k = 1.0f - rim_darken * (rho - 0.55f) / 0.45f;
        c = {c.r * k, c.g * k, c.b * k};
      }
      blend_px(img, y, x, c, alpha);
    }
  }
}

Image base_face(Rng& rng, int res) {
  Image img(res, res, 3);
  const float R = static_cast<float>(res);

  // Background: diagonal gradient between two colors plus a sinusoid.
  Rgb c0{static_cast<float>(rng.uniform(40, 200)), static_cast<float>(rng.uniform(40, 200)),
         static_cast<float>(rng.uniform(40, 200))};
  Rgb c1{static_cast<float>(rng.uniform(40, 200)), static_cast<float>(rng.uniform(40, 200)),
         static_cast<float>(rng.uniform(40, 200))};
  const float theta = static_cast<float>(rng.uniform(0, 2 * M_PI));
  const float gx = std::cos(theta), gy = std::sin(theta);
  const float freq = static_cast<float>(rng.uniform(2.0, 6.0)) * 2.0f * static_cast<float>(M_PI) / R;
  const float amp = static_cast<float>(rng.uniform(4.0, 14.0));
  const float phase = static_cast<float>(rng.uniform(0, 2 * M_PI));
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const float t = 0.5f + 0.5f * (gx * (x / R - 0.5f) + gy * (y / R - 0.5f)) * 2.0f;
      const float s = amp * std::sin(freq * (gx * x + gy * y) + phase);
      img.at(y, x, 0) = c0.r + t * (c1.r - c0.r) + s;
      img.at(y, x, 1) = c0.g + t * (c1.g - c0.g) + s;
      img.at(y, x, 2) = c0.b + t * (c1.b - c0.b) + s;
    }
  }

  const float cx = R * static_cast<float>(rng.uniform(0.46, 0.54));
  const float cy = R * static_cast<float>(rng.uniform(0.44, 0.52));
  const float ax = R * static_cast<float>(rng.uniform(0.26, 0.34));
  const float ay = R * static_cast<float>(rng.uniform(0.33, 0.42));

  // Hair cap behind the face.
  Rgb hair{static_cast<float>(rng.uniform(20, 90)), static_cast<float>(rng.uniform(15, 70)),
           static_cast<float>(rng.uniform(10, 60))};
  draw_ellipse(img, cx, cy - 0.45f * ay, ax * 1.12f, ay * 0.75f, hair);

  // Skin.
  const float skin_r = static_cast<float>(rng.uniform(170, 228));
  Rgb skin{skin_r, skin_r - static_cast<float>(rng.uniform(22, 45)),
           skin_r - static_cast<float>(rng.uniform(50, 85))};
  draw_ellipse(img, cx, cy, ax, ay, skin, 0.18f);

  // Eyes.
  const float ex = R * static_cast<float>(rng.uniform(0.11, 0.15));
  const float ey = cy - 0.22f * ay;
  Rgb white{235, 235, 235};
  Rgb iris{static_cast<float>(rng.uniform(20, 110)), static_cast<float>(rng.uniform(30, 110)),
           static_cast<float>(rng.uniform(40, 130))};
  for (int side = -1; side <= 1; side += 2) {
    const float exc = cx + side * ex;
    draw_ellipse(img, exc, ey, R * 0.052f, R * 0.032f, white);
    draw_ellipse(img, exc, ey, R * 0.020f, R * 0.020f, iris);
  }

  // Nose hint and mouth.
  Rgb nose{skin.r * 0.88f, skin.g * 0.88f, skin.b * 0.88f};
  draw_ellipse(img, cx, cy + 0.08f * ay, R * 0.018f, R * 0.07f, nose);
  Rgb mouth{static_cast<float>(rng.uniform(120, 175)), static_cast<float>(rng.uniform(30, 65)),
            static_cast<float>(rng.uniform(40, 75))};
  draw_ellipse(img, cx, cy + 0.45f * ay, R * static_cast<float>(rng.uniform(0.07, 0.11)),
               R * 0.030f, mouth);

  // Sensor noise.
  const float sigma = static_cast<float>(rng.uniform(1.5, 3.5));
  for (float& v : img.px) v += sigma * static_cast<float>(rng.normal());

  for (float& v : img.px) v = std::clamp(v, 0.0f, 255.0f);
  return img;
}

struct ArtifactRect {
  int x0, y0, x1, y1;
};

ArtifactRect pick_patch(Rng& rng, int res) {
  const float R = static_cast<float>(res);
  // Candidate centers over face features.
  const float sites[5][2] = {{0.5f, 0.62f}, {0.37f, 0.38f}, {0.63f, 0.38f}, {0.36f, 0.55f}, {0.64f, 0.55f}};
  const int pick = static_cast<int>(rng.index(5));
  const float jx = static_cast<float>(rng.uniform(-0.03, 0.03));
  const float jy = static_cast<float>(rng.uniform(-0.03, 0.03));
  const float half = static_cast<float>(rng.uniform(0.10, 0.16));
  const float cx = (sites[pick][0] + jx) * R;
  const float cy = (sites[pick][1] + jy) * R;
  ArtifactRect rect;
  rect.x0 = std::clamp(static_cast<int>(cx - half * R), 0, res - 2);
  rect.y0 = std::clamp(static_cast<int>(cy - half * R), 0, res - 2);
  rect.x1 = std::clamp(static_cast<int>(cx + half * R), rect.x0 + 2, res);
  rect.y1 = std::clamp(static_cast<int>(cy + half * R), rect.y0 + 2, res);
  return rect;
}

/// synthA forgery: misaligned self-splice. Patch content is replaced by a
/// blend with a shifted copy, given a small channel shift, box-smoothed,
/// and rimmed with a darker seam. Everything stays inside the rect.
void apply_artifact_a(Image& img, Rng& rng, const ArtifactRect& rect) {
  const int res = img.h;
  const int sh_x = rng.range(-res / 8, res / 8);
  const int sh_y = rng.range(-res / 8, res / 8);
  const float alpha = static_cast<float>(rng.uniform(0.45, 0.7));
  const int shift_ch = static_cast<int>(rng.index(3));
  const float ch_shift = static_cast<float>(rng.uniform(8, 22)) * (rng.coin() ? 1.0f : -1.0f);

  Image src = img;
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const int sy = std::clamp(y + sh_y, 0, res - 1);
      const int sx = std::clamp(x + sh_x, 0, res - 1);
      for (int ch = 0; ch < 3; ++ch) {
        float v = (1 - alpha) * src.at(y, x, ch) + alpha * src.at(sy, sx, ch);
        if (ch == shift_ch) v += ch_shift;
        img.at(y, x, ch) = v;
      }
    }
  }
  // Interior smoothing, leaving a crisp boundary.
  Image smoothed = img;
  for (int y = rect.y0 + 1; y < rect.y1 - 1; ++y) {
    for (int x = rect.x0 + 1; x < rect.x1 - 1; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        float acc = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += img.at(y + dy, x + dx, ch);
        smoothed.at(y, x, ch) = acc / 9.0f;
      }
    }
  }
  img = smoothed;
  // Seam ring.
  const int ring = std::max(1, res / 64);
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const bool on_ring = y < rect.y0 + ring || y >= rect.y1 - ring || x < rect.x0 + ring ||
                           x >= rect.x1 - ring;
      if (!on_ring) continue;
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) *= 0.82f;
    }
  }
  for (float& v : img.px) v = std::clamp(v, 0.0f, 255.0f);
}

/// synthB forgery: blended mesh. A checker pattern modulates the patch,
/// the patch gets a tint, and the rim brightens instead of darkening.
void apply_artifact_b(Image& img, Rng& rng, const ArtifactRect& rect) {
  const int res = img.h;
  const int cell = std::max(2, res / 32);
  const float amp = static_cast<float>(rng.uniform(14, 30));
  const float tint = static_cast<float>(rng.uniform(6, 18)) * (rng.coin() ? 1.0f : -1.0f);
  const int tint_ch = static_cast<int>(rng.index(3));
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const float sign = (((y - rect.y0) / cell + (x - rect.x0) / cell) % 2 == 0) ? 1.0f : -1.0f;
      for (int ch = 0; ch < 3; ++ch) {
        float v = img.at(y, x, ch) + sign * amp;
        if (ch == tint_ch) v += tint;
        img.at(y, x, ch) = v;
      }
    }
  }
  const int ring = std::max(1, res / 64);
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const bool on_ring = y < rect.y0 + ring || y >= rect.y1 - ring || x < rect.x0 + ring ||
                           x >= rect.x1 - ring;
      if (!on_ring) continue;
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = std::min(255.0f, img.at(y, x, ch) * 1.15f);
    }
  }
  for (float& v : img.px) v = std::clamp(v, 0.0f, 255.0f);
}

std::uint64_t sample_seed(std::uint64_t seed, int index, int label) {
  return mix_seed(seed, (static_cast<std::uint64_t>(index) << 1) | static_cast<std::uint64_t>(label));
}

}  // namespace

Image synth_sample(const std::string& variant, std::uint64_t seed, int index, int label,
                   int resolution) {
  if (variant != "synthA" && variant != "synthB") {
    throw std::invalid_argument("unknown synthetic variant: " + variant);
  }
  Rng rng(sample_seed(seed, index, label));
  Image img = base_face(rng, resolution);
  if (label == 0) {
    const ArtifactRect rect = pick_patch(rng, resolution);
    if (variant == "synthA") {
      apply_artifact_a(img, rng, rect);
    } else {
      apply_artifact_b(img, rng, rect);
    }
  }
  return img;
}

SynthPair synth_pair(const std::string& variant, std::uint64_t seed, int index,
                     int resolution) {
  Rng rng(sample_seed(seed, index, 0));
  SynthPair pair;
  pair.real = base_face(rng, resolution);
  pair.fake = pair.real;
  const ArtifactRect rect = pick_patch(rng, resolution);
  pair.x0 = rect.x0;
  pair.y0 = rect.y0;
  pair.x1 = rect.x1;
  pair.y1 = rect.y1;
  if (variant == "synthA") {
    apply_artifact_a(pair.fake, rng, rect);
  } else {
    apply_artifact_b(pair.fake, rng, rect);
  }
  return pair;
}

Manifest generate_synthetic_dataset(const std::string& variant, std::uint64_t seed,
                                    int n_per_class, int resolution,
                                    const std::filesystem::path& out_dir) {
  if (n_per_class < 50) throw std::invalid_argument("n_per_class must be >= 50");
  std::filesystem::create_directories(out_dir / "real");
  std::filesystem::create_directories(out_dir / "fake");
  Manifest m;
  m.name = variant;
  m.split = "train";
  m.resolution = resolution;
  m.dir = out_dir;
  char id[64];
  for (int label = 0; label <= 1; ++label) {
    const char* cls = label == 1 ? "real" : "fake";
    for (int i = 0; i < n_per_class; ++i) {
      std::snprintf(id, sizeof(id), "%s-%s-%05d", variant.c_str(), cls, i);
      Record r;
      r.id = id;
      r.path = std::string(cls) + "/" + id + ".png";
      r.true_label = label;
      r.assigned_label = label;
      r.role = Role::clean;
      save_png(out_dir / r.path, synth_sample(variant, seed, i, label, resolution));
      m.records.push_back(std::move(r));
    }
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const Record& a, const Record& b) { return a.id < b.id; });
  return m;
}

}  // namespace passdoor
