#include "passdoor/plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace passdoor {

namespace {

constexpr int kW = 720, kH = 480;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 50, kMarginB = 60;

const cv::Scalar kPalette[] = {
    {180, 90, 30},  {60, 60, 200}, {60, 160, 60},  {30, 120, 200},
    {150, 60, 150}, {40, 40, 40},  {120, 120, 20},
};

void draw_frame(cv::Mat& img, const std::string& title, const std::string& x_label,
                const std::string& y_label) {
  img.setTo(cv::Scalar(255, 255, 255));
  cv::rectangle(img, {kMarginL, kMarginT}, {kW - kMarginR, kH - kMarginB},
                cv::Scalar(80, 80, 80));
  cv::putText(img, title, {kMarginL, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
              cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
  cv::putText(img, x_label, {kW / 2 - 40, kH - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
  cv::putText(img, y_label, {8, kH / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& x_label, const std::string& y_label,
                const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("line_chart: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) ymax = std::max(ymax, v);
  }
  if (xmax <= xmin) xmax = xmin + 1;
  ymax = std::max(ymax * 1.05, 1e-6);

  cv::Mat img(kH, kW, CV_8UC3);
  draw_frame(img, title, x_label, y_label);
  auto px = [&](double x) {
    return kMarginL + static_cast<int>((x - xmin) / (xmax - xmin) * (kW - kMarginL - kMarginR));
  };
  auto py = [&](double y) {
    return kH - kMarginB - static_cast<int>((y - ymin) / (ymax - ymin) * (kH - kMarginT - kMarginB));
  };
  for (int t = 0; t <= 4; ++t) {
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    cv::putText(img, fmt(yv), {8, py(yv) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(90, 90, 90), 1, cv::LINE_AA);
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    cv::putText(img, fmt(xv), {px(xv) - 10, kH - kMarginB + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(90, 90, 90), 1, cv::LINE_AA);
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const cv::Scalar color = kPalette[si % std::size(kPalette)];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
      cv::line(img, {px(s.x[i]), py(s.y[i])}, {px(s.x[i + 1]), py(s.y[i + 1])}, color, 2,
               cv::LINE_AA);
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      cv::circle(img, {px(s.x[i]), py(s.y[i])}, 3, color, -1, cv::LINE_AA);
    }
    cv::putText(img, s.label, {kW - kMarginR - 160, kMarginT + 20 + 18 * static_cast<int>(si)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) {
    throw std::runtime_error("failed to write chart: " + path.string());
  }
}

void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values) {
  if (labels.size() != values.size() || labels.empty()) {
    throw std::invalid_argument("bar_chart: labels/values mismatch");
  }
  double ymax = 1e-6;
  for (double v : values) ymax = std::max(ymax, v);
  ymax *= 1.1;

  cv::Mat img(kH, kW, CV_8UC3);
  draw_frame(img, title, "", "");
  const int n = static_cast<int>(values.size());
  const int span = kW - kMarginL - kMarginR;
  const int bw = std::max(8, span / (2 * n));
  for (int i = 0; i < n; ++i) {
    const int cx = kMarginL + span * (2 * i + 1) / (2 * n);
    const int h = static_cast<int>(values[static_cast<std::size_t>(i)] / ymax *
                                   (kH - kMarginT - kMarginB));
    cv::rectangle(img, {cx - bw / 2, kH - kMarginB - h}, {cx + bw / 2, kH - kMarginB},
                  kPalette[i % std::size(kPalette)], -1);
    cv::putText(img, labels[static_cast<std::size_t>(i)], {cx - bw / 2, kH - kMarginB + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
    cv::putText(img, fmt(values[static_cast<std::size_t>(i)]), {cx - bw / 2, kH - kMarginB - h - 6},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) {
    throw std::runtime_error("failed to write chart: " + path.string());
  }
}

}  // namespace passdoor
