#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tempex::cli {

struct LineSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), sorted by x
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
};

/// Plain SVG line plot with axes, ticks and a legend.
void write_line_chart(const LineChart& chart, const std::filesystem::path& path);

}  // namespace tempex::cli
