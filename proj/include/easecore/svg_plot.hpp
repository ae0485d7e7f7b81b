#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/io.hpp"

namespace easecore {

struct PlotSeries {
  std::string label;
  std::string color = "#1f77b4";
  bool draw_line = true;
  bool draw_markers = true;
  std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  std::vector<PlotSeries> series;
  // Optional dashed horizontal reference line (the chance-rate line).
  bool has_hline = false;
  double hline = 0.0;
  std::string hline_label;
};

namespace detail {

inline std::string svg_num(double v) { return format_double_fixed(v, 2); }

inline std::string xml_escape(const std::string& s) {
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

inline std::string tick_label(double v) {
  std::string s = format_double_fixed(v, 3);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s.empty() ? "0" : s;
}

}  // namespace detail

// Fixed-size SVG line/scatter chart. Output is a pure function of the spec,
// so plots rerun byte-identically like every other artifact.
inline std::string render_svg_plot(const PlotSpec& spec) {
  const double width = 640, height = 420;
  const double ml = 62, mr = 150, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const PlotSeries& s : spec.series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (!(x_min <= x_max)) {
    x_min = 0;
    x_max = 1;
    y_min = 0;
    y_max = 1;
  }
  if (spec.has_hline) {
    y_min = std::min(y_min, spec.hline);
    y_max = std::max(y_max, spec.hline);
  }
  if (x_max == x_min) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double x_pad = (x_max - x_min) * 0.06, y_pad = (y_max - y_min) * 0.08;
  x_min -= x_pad;
  x_max += x_pad;
  y_min -= y_pad;
  y_max += y_pad;

  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << (ml + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << detail::xml_escape(spec.title)
     << "</text>\n";

  // axes + ticks
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const int nticks = 5;
  for (int i = 0; i <= nticks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / nticks;
    const double fy = y_min + (y_max - y_min) * i / nticks;
    os << "<line x1=\"" << detail::svg_num(px(fx)) << "\" y1=\"" << (mt + ph) << "\" x2=\""
       << detail::svg_num(px(fx)) << "\" y2=\"" << (mt + ph + 5) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << detail::svg_num(px(fx)) << "\" y=\"" << (mt + ph + 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << detail::tick_label(fx) << "</text>\n";
    os << "<line x1=\"" << (ml - 5) << "\" y1=\"" << detail::svg_num(py(fy)) << "\" x2=\"" << ml
       << "\" y2=\"" << detail::svg_num(py(fy)) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << (ml - 8) << "\" y=\"" << detail::svg_num(py(fy) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << detail::tick_label(fy) << "</text>\n";
  }
  os << "<text x=\"" << (ml + pw / 2) << "\" y=\"" << (height - 10)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
     << detail::xml_escape(spec.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (mt + ph / 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 16 " << (mt + ph / 2) << ")\">" << detail::xml_escape(spec.y_label)
     << "</text>\n";

  if (spec.has_hline) {
    os << "<line x1=\"" << ml << "\" y1=\"" << detail::svg_num(py(spec.hline)) << "\" x2=\""
       << (ml + pw) << "\" y2=\"" << detail::svg_num(py(spec.hline))
       << "\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n";
  }

  for (const PlotSeries& s : spec.series) {
    if (s.draw_line && s.points.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i)
        os << (i ? " " : "") << detail::svg_num(px(s.points[i].first)) << ","
           << detail::svg_num(py(s.points[i].second));
      os << "\"/>\n";
    }
    if (s.draw_markers) {
      for (const auto& [x, y] : s.points)
        os << "<circle cx=\"" << detail::svg_num(px(x)) << "\" cy=\"" << detail::svg_num(py(y))
           << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
  }

  // legend
  double ly = mt + 8;
  for (const PlotSeries& s : spec.series) {
    os << "<line x1=\"" << (ml + pw + 10) << "\" y1=\"" << ly << "\" x2=\"" << (ml + pw + 30)
       << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << (ml + pw + 36) << "\" y=\"" << (ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::xml_escape(s.label)
       << "</text>\n";
    ly += 18;
  }
  if (spec.has_hline && !spec.hline_label.empty()) {
    os << "<line x1=\"" << (ml + pw + 10) << "\" y1=\"" << ly << "\" x2=\"" << (ml + pw + 30)
       << "\" y2=\"" << ly << "\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << (ml + pw + 36) << "\" y=\"" << (ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::xml_escape(spec.hline_label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_svg_plot(const fs::path& path, const PlotSpec& spec,
                           const std::string& config_hash) {
  std::string body = render_svg_plot(spec);
  const std::string marker = "<!-- config:" + config_hash + " -->\n";
  atomic_write_file(path, marker + body);
}

}  // namespace easecore
