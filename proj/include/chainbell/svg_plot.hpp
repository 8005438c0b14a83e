#pragma once

#include <string>
#include <vector>

namespace chainbell {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN entries break the line
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  int width = 720;
  int height = 480;
};

/// Self-contained SVG line plot with auto-scaled axes and a legend.
std::string render_svg(const PlotSpec& spec);

/// Fixed palette, cycled by index.
const std::string& palette_color(std::size_t index);

}  // namespace chainbell
