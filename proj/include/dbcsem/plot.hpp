#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace dbcsem {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Lines with markers, axes, ticks and a legend, written as PNG.
void write_line_plot(const std::filesystem::path& png, const LinePlot& plot);

/// Colour-mapped matrix with a colour bar over [lo, hi], written as PNG.
void write_heatmap(const std::filesystem::path& png, const std::string& title, const Eigen::MatrixXd& values,
                   double lo, double hi);

}  // namespace dbcsem
