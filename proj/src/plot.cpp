#include "dbcsem/plot.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dbcsem/errors.hpp"

namespace dbcsem {

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 640;
constexpr int kLeft = 90;
constexpr int kRight = 30;
constexpr int kTop = 50;
constexpr int kBottom = 70;
const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(225, 225, 225);

const std::vector<cv::Scalar>& palette() {
  // BGR
  static const std::vector<cv::Scalar> colours{{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                                               {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};
  return colours;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.5, int thickness = 1) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, kInk, thickness, cv::LINE_AA);
}

cv::Size text_size(const std::string& s, double scale = 0.5, int thickness = 1) {
  int base = 0;
  return cv::getTextSize(s, cv::FONT_HERSHEY_SIMPLEX, scale, thickness, &base);
}

// vertical label, drawn on a strip and rotated
void vertical_text(cv::Mat& img, const std::string& s, cv::Point centre) {
  const auto size = text_size(s);
  cv::Mat strip(size.height + 10, size.width + 4, CV_8UC3, cv::Scalar(255, 255, 255));
  text(strip, s, {2, size.height + 3});
  cv::Mat rotated;
  cv::rotate(strip, rotated, cv::ROTATE_90_COUNTERCLOCKWISE);
  const cv::Rect roi(centre.x - rotated.cols / 2, centre.y - rotated.rows / 2, rotated.cols, rotated.rows);
  const cv::Rect bounds(0, 0, img.cols, img.rows);
  if ((roi & bounds) == roi) rotated.copyTo(img(roi));
}

struct Range {
  double lo;
  double hi;
};

Range padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
  if (hi - lo < 1e-9) {
    const double pad = std::max(std::abs(lo) * 0.05, 0.5);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::vector<double> ticks(Range r) {
  const double raw = (r.hi - r.lo) / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) out.push_back(t);
  return out;
}

void save(const std::filesystem::path& png, const cv::Mat& img) {
  if (png.has_parent_path()) std::filesystem::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw Error("cannot write plot " + png.string());
}

}  // namespace

void write_line_plot(const std::filesystem::path& png, const LinePlot& plot) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw ConfigError("series '" + s.label + "' has unequal x and y lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  const auto xr = padded(xlo, xhi);
  const auto yr = padded(ylo, yhi);
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x, double y) {
    return cv::Point(kLeft + static_cast<int>(std::lround((x - xr.lo) / (xr.hi - xr.lo) * pw)),
                     kTop + ph - static_cast<int>(std::lround((y - yr.lo) / (yr.hi - yr.lo) * ph)));
  };

  for (double t : ticks(xr)) {
    const auto p = px(t, yr.lo);
    cv::line(img, {p.x, kTop}, {p.x, kTop + ph}, kGrid, 1);
    const auto label = tick_label(t);
    text(img, label, {p.x - text_size(label).width / 2, kTop + ph + 20});
  }
  for (double t : ticks(yr)) {
    const auto p = px(xr.lo, t);
    cv::line(img, {kLeft, p.y}, {kLeft + pw, p.y}, kGrid, 1);
    const auto label = tick_label(t);
    text(img, label, {kLeft - 8 - text_size(label).width, p.y + 5});
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, kInk, 1);

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const auto colour = palette()[k % palette().size()];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.push_back(px(s.x[i], s.y[i]));
    }
    if (pts.size() > 1) cv::polylines(img, pts, false, colour, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(img, p, 4, colour, cv::FILLED, cv::LINE_AA);
  }
  if (!plot.series.empty()) {
    const cv::Rect box(kLeft + pw - 178, kTop + 4, 172, 8 + static_cast<int>(plot.series.size()) * 20);
    cv::rectangle(img, box, cv::Scalar(255, 255, 255), cv::FILLED);
    cv::rectangle(img, box, kGrid, 1);
  }
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto colour = palette()[k % palette().size()];
    const int ly = kTop + 22 + static_cast<int>(k) * 20;
    cv::line(img, {kLeft + pw - 170, ly - 5}, {kLeft + pw - 145, ly - 5}, colour, 2, cv::LINE_AA);
    text(img, plot.series[k].label, {kLeft + pw - 138, ly});
  }

  text(img, plot.title, {kLeft + pw / 2 - text_size(plot.title, 0.65, 2).width / 2, 32}, 0.65, 2);
  text(img, plot.x_label, {kLeft + pw / 2 - text_size(plot.x_label).width / 2, kHeight - 22});
  vertical_text(img, plot.y_label, {24, kTop + ph / 2});
  save(png, img);
}

void write_heatmap(const std::filesystem::path& png, const std::string& title, const Eigen::MatrixXd& values,
                   double lo, double hi) {
  if (values.size() == 0) throw ConfigError("empty heatmap");
  if (!(hi > lo)) throw ConfigError("heatmap range must satisfy hi > lo");
  cv::Mat grey(static_cast<int>(values.rows()), static_cast<int>(values.cols()), CV_8UC1);
  for (int r = 0; r < grey.rows; ++r) {
    for (int c = 0; c < grey.cols; ++c) {
      const double t = std::clamp((values(r, c) - lo) / (hi - lo), 0.0, 1.0);
      grey.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
  }
  constexpr int kSide = 540;
  cv::Mat scaled, coloured;
  cv::resize(grey, scaled, {kSide, kSide}, 0, 0, cv::INTER_NEAREST);
  cv::applyColorMap(scaled, coloured, cv::COLORMAP_VIRIDIS);

  cv::Mat img(kSide + 90, kSide + 150, CV_8UC3, cv::Scalar(255, 255, 255));
  coloured.copyTo(img(cv::Rect(30, 60, kSide, kSide)));
  cv::Mat bar_grey(kSide, 1, CV_8UC1);
  for (int r = 0; r < kSide; ++r) bar_grey.at<std::uint8_t>(r, 0) = static_cast<std::uint8_t>(255 - r * 255 / (kSide - 1));
  cv::Mat bar_wide, bar;
  cv::resize(bar_grey, bar_wide, {20, kSide}, 0, 0, cv::INTER_NEAREST);
  cv::applyColorMap(bar_wide, bar, cv::COLORMAP_VIRIDIS);
  bar.copyTo(img(cv::Rect(kSide + 50, 60, 20, kSide)));
  text(img, tick_label(hi), {kSide + 76, 70});
  text(img, tick_label(lo), {kSide + 76, 60 + kSide});
  text(img, title, {30, 36}, 0.65, 2);
  save(png, img);
}

}  // namespace dbcsem
