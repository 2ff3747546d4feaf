#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "bood/tensor.hpp"

namespace bood {

/// Dependency-free SVG line plots; enough for sweep curves and calibration
/// diagonals, nothing more.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void add_series(std::string name, std::vector<double> x, std::vector<double> y) {
    detail::require(x.size() == y.size() && !x.empty(), "svg series: bad lengths");
    series_.push_back(Series{std::move(name), std::move(x), std::move(y)});
  }

  void write(const std::string& path) const {
    detail::require(!series_.empty(), "svg: no series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double W = 640, H = 420, ml = 70, mr = 160, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ofstream out(path, std::ios::trunc);
    detail::require(out.good(), "cannot open " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title_
        << "</text>\n";
    // axes
    out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
      double xv = xmin + (xmax - xmin) * i / 5.0;
      double yv = ymin + (ymax - ymin) * i / 5.0;
      out << "<text x='" << px(xv) << "' y='" << H - mb + 18
          << "' text-anchor='middle' font-size='11'>" << fmt(xv) << "</text>\n";
      out << "<text x='" << ml - 6 << "' y='" << py(yv) + 4
          << "' text-anchor='end' font-size='11'>" << fmt(yv) << "</text>\n";
      out << "<line x1='" << px(xv) << "' y1='" << H - mb << "' x2='" << px(xv) << "' y2='"
          << H - mb + 4 << "' stroke='black'/>\n";
      out << "<line x1='" << ml - 4 << "' y1='" << py(yv) << "' x2='" << ml << "' y2='" << py(yv)
          << "' stroke='black'/>\n";
    }
    out << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
        << "' text-anchor='middle' font-size='13'>" << xlabel_ << "</text>\n";
    out << "<text x='16' y='" << (mt + H - mb) / 2
        << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 " << (mt + H - mb) / 2
        << ")'>" << ylabel_ << "</text>\n";
    for (std::size_t si = 0; si < series_.size(); ++si) {
      const auto& s = series_[si];
      const char* color = palette[si % 8];
      out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << px(s.x[i]) << "," << py(s.y[i]) << " ";
      out << "'/>\n";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='2.5' fill='"
            << color << "'/>\n";
      const double ly = mt + 16 + 18 * static_cast<double>(si);
      out << "<line x1='" << W - mr + 10 << "' y1='" << ly << "' x2='" << W - mr + 34 << "' y2='"
          << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
      out << "<text x='" << W - mr + 40 << "' y='" << ly + 4 << "' font-size='12'>" << s.name
          << "</text>\n";
    }
    out << "</svg>\n";
  }

 private:
  struct Series {
    std::string name;
    std::vector<double> x, y;
  };

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
  }

  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
};

}  // namespace bood
