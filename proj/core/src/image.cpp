#include "passdoor/image.hpp"

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <stdexcept>

namespace passdoor {

Image load_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) {
    throw std::runtime_error("failed to decode image: " + path.string());
  }
  Image img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV loads BGR; we keep RGB in memory.
      img.at(y, x, 0) = static_cast<float>(row[x][2]);
      img.at(y, x, 1) = static_cast<float>(row[x][1]);
      img.at(y, x, 2) = static_cast<float>(row[x][0]);
    }
  }
  return img;
}

void save_png(const std::filesystem::path& path, const Image& img) {
  if (img.c != 3) throw std::invalid_argument("save_png expects 3 channels");
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::round(img.at(y, x, ch));
        v = std::min(255.0f, std::max(0.0f, v));
        row[x][2 - ch] = static_cast<unsigned char>(v);
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) {
    throw std::runtime_error("failed to write png: " + path.string());
  }
}

Image quantize(const Image& img) {
  Image out = img;
  for (float& v : out.px) {
    v = std::min(255.0f, std::max(0.0f, std::round(v)));
  }
  return out;
}

Image clamp_pixels(const Image& img, float lo, float hi) {
  Image out = img;
  for (float& v : out.px) v = std::min(hi, std::max(lo, v));
  return out;
}

}  // namespace passdoor
