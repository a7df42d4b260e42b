#pragma once

// Internal Image <-> cv::Mat conversions; OpenCV stays out of the
// public headers.

#include <opencv2/core.hpp>

#include "passdoor/image.hpp"

namespace passdoor {

inline cv::Mat to_mat_8u(const Image& img) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::round(img.at(y, x, ch));
        row[x][2 - ch] = static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, v)));
      }
    }
  }
  return m;
}

inline Image from_mat_8u(const cv::Mat& m) {
  Image img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      img.at(y, x, 0) = static_cast<float>(row[x][2]);
      img.at(y, x, 1) = static_cast<float>(row[x][1]);
      img.at(y, x, 2) = static_cast<float>(row[x][0]);
    }
  }
  return img;
}

}  // namespace passdoor
