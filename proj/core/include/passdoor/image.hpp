#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace passdoor {

/// Pixel raster on the [0, 255] scale, row-major HWC, float-valued so
/// residuals and intermediate results stay exact until written to disk.
/// Quantization to 8-bit happens only in save_png.
struct Image {
  int h = 0;
  int w = 0;
  int c = 3;
  std::vector<float> px;

  Image() = default;
  Image(int h_, int w_, int c_, float fill = 0.0f)
      : h(h_), w(w_), c(c_), px(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  float& at(int y, int x, int ch) {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch) const {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

/// 8-bit RGB PNG I/O. save_png rounds to nearest and clamps to [0, 255].
Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& img);

/// Round + clamp to the 8-bit grid without writing a file; models the
/// storage quantization a poisoned sample goes through.
Image quantize(const Image& img);

Image clamp_pixels(const Image& img, float lo = 0.0f, float hi = 255.0f);

}  // namespace passdoor
