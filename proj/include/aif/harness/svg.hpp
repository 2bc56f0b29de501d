#pragma once

// Static SVG line/scatter and bar charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace aif::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool scatter = false;
};

struct ChartLabels {
  std::string title;
  std::string x;
  std::string y;
};

namespace svg_detail {

inline constexpr double kWidth = 720.0;
inline constexpr double kHeight = 440.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 180.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 50.0;

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

inline void axes(std::ostringstream& os, const Frame& f, const ChartLabels& l, bool numeric_x) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(l.title)
     << "</text>\n";
  const double xl = f.px(f.x0), xr = f.px(f.x1), yb = f.py(f.y0), yt = f.py(f.y1);
  os << "<path d=\"M" << num(xl) << ' ' << num(yt) << " V" << num(yb) << " H" << num(xr)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << num(xl - 6) << "\" y=\"" << num(f.py(v) + 4) << "\" text-anchor=\"end\">" << tick(v)
       << "</text>\n";
    os << "<line x1=\"" << num(xl) << "\" x2=\"" << num(xr) << "\" y1=\"" << num(f.py(v)) << "\" y2=\""
       << num(f.py(v)) << "\" stroke=\"#e0e0e0\"/>\n";
    if (numeric_x) {
      const double u = f.x0 + (f.x1 - f.x0) * i / 4.0;
      os << "<text x=\"" << num(f.px(u)) << "\" y=\"" << num(yb + 16) << "\" text-anchor=\"middle\">" << tick(u)
         << "</text>\n";
    }
  }
  os << "<text x=\"" << num((xl + xr) / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
     << escape(l.x) << "</text>\n";
  os << "<text transform=\"translate(16," << num((yt + yb) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(l.y) << "</text>\n";
}

}  // namespace svg_detail

// Lines for ordinary series, dots for scatter series; legend on the right.
inline std::string line_chart(const std::vector<Series>& series, const ChartLabels& labels) {
  using namespace svg_detail;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
  pad(x0, x1);
  pad(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::ostringstream os;
  axes(os, f, labels, true);
  std::size_t legend = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = colour(k);
    if (s.scatter) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"2.5\" fill=\"" << c
           << "\" fill-opacity=\"0.6\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
      os << "\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(legend++);
    os << "<rect x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
       << c << "\"/><text x=\"" << num(kWidth - kRight + 26) << "\" y=\"" << num(ly + 1) << "\">" << escape(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string bar_chart(const std::vector<std::string>& categories, const std::vector<double>& values,
                             const ChartLabels& labels) {
  using namespace svg_detail;
  double y0 = 0.0, y1 = 0.0;
  for (double v : values) {
    y0 = std::min(y0, v);
    y1 = std::max(y1, v);
  }
  pad(y0, y1);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(categories.size(), 1)), y0, y1};
  std::ostringstream os;
  axes(os, f, labels, false);
  const double zero = f.py(std::clamp(0.0, y0, y1));
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const double left = f.px(static_cast<double>(i) + 0.15);
    const double right = f.px(static_cast<double>(i) + 0.85);
    const double top = std::min(zero, f.py(values[i]));
    const double h = std::abs(f.py(values[i]) - zero);
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left) << "\" height=\""
       << num(h) << "\" fill=\"" << colour(0) << "\"/>\n";
    os << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kHeight - kBottom + 16)
       << "\" text-anchor=\"middle\">" << escape(categories[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace aif::harness
