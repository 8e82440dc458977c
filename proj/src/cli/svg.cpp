#include "svg.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace tempex::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  }
};

}  // namespace

void write_line_chart(const LineChart& chart, const std::filesystem::path& path) {
  Range xr, yr;
  for (const auto& s : chart.series) {
    for (auto [x, y] : s.points) xr.add(x), yr.add(y);
  }
  xr.pad();
  yr.pad();
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + (1 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  auto out = fmt::output_file(path.string());
  out.print(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)"
            "\n",
            kWidth, kHeight);
  out.print(R"(<rect width="100%" height="100%" fill="white"/>)" "\n");
  out.print(R"(<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>)" "\n", kLeft + pw / 2,
            escape(chart.title));
  out.print(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)" "\n", kLeft, kTop, pw, ph);
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4, fy = yr.lo + (yr.hi - yr.lo) * i / 4;
    out.print(R"(<line x1="{0:.1f}" y1="{1}" x2="{0:.1f}" y2="{2}" stroke="black"/>)" "\n", px(fx), kTop + ph, kTop + ph + 5);
    out.print(R"(<text x="{:.1f}" y="{}" text-anchor="middle">{:.3g}</text>)" "\n", px(fx), kTop + ph + 18, fx);
    out.print(R"(<line x1="{0}" y1="{1:.1f}" x2="{2}" y2="{1:.1f}" stroke="#ddd"/>)" "\n", kLeft, py(fy), kLeft + pw);
    out.print(R"(<text x="{}" y="{:.1f}" text-anchor="end">{:.3g}</text>)" "\n", kLeft - 6, py(fy) + 4, fy);
  }
  out.print(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)" "\n", kLeft + pw / 2, kHeight - 15,
            escape(chart.x_label));
  out.print(R"svg(<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>)svg" "\n",
            kTop + ph / 2, escape(chart.y_label));
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    const auto color = kColors[s % kColors.size()];
    std::string points;
    for (auto [x, y] : series.points) points += fmt::format("{:.1f},{:.1f} ", px(x), py(y));
    out.print(R"(<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>)" "\n", color, points);
    for (auto [x, y] : series.points) {
      out.print(R"(<circle cx="{:.1f}" cy="{:.1f}" r="3" fill="{}"/>)" "\n", px(x), py(y), color);
    }
    const double ly = kTop + 10 + 18 * static_cast<double>(s);
    out.print(R"(<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"/>)" "\n", kWidth - kRight + 12, ly,
              kWidth - kRight + 32, color);
    out.print(R"(<text x="{}" y="{}">{}</text>)" "\n", kWidth - kRight + 38, ly + 4, escape(series.name));
  }
  out.print("</svg>\n");
}

}  // namespace tempex::cli
