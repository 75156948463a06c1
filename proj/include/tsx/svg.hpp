#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsx/common.hpp"

namespace tsx::svg {

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

using Attributes = std::vector<std::pair<std::string, std::string>>;

/// Minimal SVG document builder. Geometry is rounded to 0.01 px; data
/// attributes are passed through verbatim.
class Document {
 public:
  Document(double width, double height) : width_(width), height_(height) {}

  void element(const std::string& tag, const Attributes& attrs, const std::string& text = {}) {
    body_ << "  <" << tag;
    for (const auto& [k, v] : attrs) body_ << ' ' << k << "=\"" << escape(v) << '"';
    if (text.empty()) {
      body_ << "/>\n";
    } else {
      body_ << '>' << escape(text) << "</" << tag << ">\n";
    }
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    element("line", {{"x1", px(x1)}, {"y1", px(y1)}, {"x2", px(x2)}, {"y2", px(y2)}, {"stroke", stroke},
                     {"stroke-width", px(width)}});
  }

  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 11) {
    element("text", {{"x", px(x)}, {"y", px(y)}, {"font-size", std::to_string(size)}, {"text-anchor", anchor},
                     {"font-family", "sans-serif"}},
            s);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, Attributes extra = {}) {
    std::string d;
    for (const auto& [x, y] : pts) d += px(x) + "," + px(y) + " ";
    if (!d.empty()) d.pop_back();
    Attributes a{{"points", d}, {"fill", "none"}, {"stroke", stroke}, {"stroke-width", "1.5"}};
    a.insert(a.end(), extra.begin(), extra.end());
    element("polyline", a);
  }

  std::string str(const std::string& title) const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width_) << "\" height=\"" << px(height_)
        << "\" viewBox=\"0 0 " << px(width_) << ' ' << px(height_) << "\">\n"
        << "  <title>" << escape(title) << "</title>\n"
        << "  <rect x=\"0\" y=\"0\" width=\"" << px(width_) << "\" height=\"" << px(height_) << "\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

  static std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

/// Linear map from a data interval onto a pixel interval.
struct Scale {
  double d0 = 0, d1 = 1, r0 = 0, r1 = 1;
  double operator()(double v) const { return d1 == d0 ? 0.5 * (r0 + r1) : r0 + (v - d0) / (d1 - d0) * (r1 - r0); }
};

/// Bounds padded by 5% of the span (or 1 when the span is zero).
inline std::pair<double, double> padded_range(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 1.0};
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double a = *lo, b = *hi;
  const double pad = b > a ? 0.05 * (b - a) : 1.0;
  return {a - pad, b + pad};
}

/// Blue -> red ramp for t in [0, 1].
inline std::string diverging_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 200 * t));
  const int b = static_cast<int>(std::lround(240 - 200 * t));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, 60, b);
  return buf;
}

}  // namespace tsx::svg
