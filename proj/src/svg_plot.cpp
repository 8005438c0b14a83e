#include "chainbell/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <locale>
#include <sstream>

namespace chainbell {

namespace {

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1-2-5 tick step giving about `target` intervals over the span.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0, 10.0})
    if (raw <= f * mag) return f * mag;
  return 10.0 * mag;
}

std::string num(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(6) << v;
  return os.str();
}

std::string coord(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

const std::string& palette_color(std::size_t index) {
  static const std::array<std::string, 8> colors = {"#1f77b4", "#d62728", "#ff7f0e", "#2ca02c",
                                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors[index % colors.size()];
}

std::string render_svg(const PlotSpec& spec) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : spec.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
     << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << coord(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(spec.title) << "</text>\n";
  os << "<rect x=\"" << coord(left) << "\" y=\"" << coord(top) << "\" width=\"" << coord(pw) << "\" height=\""
     << coord(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  const double xs = nice_step(xmax - xmin, 6);
  for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9 * xs; t += xs) {
    const double px = sx(t);
    os << "<line x1=\"" << coord(px) << "\" y1=\"" << coord(top + ph) << "\" x2=\"" << coord(px) << "\" y2=\""
       << coord(top + ph + 5) << "\" stroke=\"black\"/>";
    os << "<text x=\"" << coord(px) << "\" y=\"" << coord(top + ph + 19) << "\" text-anchor=\"middle\">"
       << num(std::abs(t) < 1e-12 * xs ? 0.0 : t) << "</text>\n";
  }
  const double ys = nice_step(ymax - ymin, 6);
  for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9 * ys; t += ys) {
    const double py = sy(t);
    os << "<line x1=\"" << coord(left - 5) << "\" y1=\"" << coord(py) << "\" x2=\"" << coord(left + pw)
       << "\" y2=\"" << coord(py) << "\" stroke=\"#dddddd\"/>";
    os << "<text x=\"" << coord(left - 8) << "\" y=\"" << coord(py + 4) << "\" text-anchor=\"end\">"
       << num(std::abs(t) < 1e-12 * ys ? 0.0 : t) << "</text>\n";
  }
  os << "<text x=\"" << coord(left + pw / 2) << "\" y=\"" << spec.height - 12 << "\" text-anchor=\"middle\">"
     << escape(spec.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << coord(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(spec.y_label) << "</text>\n";

  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const PlotSeries& s = spec.series[k];
    const std::string dash = s.dashed ? " stroke-dasharray=\"6,4\"" : "";
    std::ostringstream path;
    bool pen = false;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        pen = false;
        continue;
      }
      path << (pen ? " L" : " M") << coord(sx(s.x[i])) << ',' << coord(sy(s.y[i]));
      pen = true;
    }
    os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\"" << dash
       << "/>\n";
    if (s.markers)
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << coord(sx(s.x[i])) << "\" cy=\"" << coord(sy(s.y[i])) << "\" r=\"3\" fill=\""
             << s.color << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << coord(left + pw + 12) << "\" y1=\"" << coord(ly) << "\" x2=\"" << coord(left + pw + 36)
       << "\" y2=\"" << coord(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"1.8\"" << dash << "/>";
    os << "<text x=\"" << coord(left + pw + 42) << "\" y=\"" << coord(ly + 4) << "\">" << escape(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace chainbell
