#include "smpc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "smpc/errors.hpp"

namespace smpc {

namespace {

// Fixed layout: data area inside these margins.
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 42.0;
constexpr double kBottom = 55.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
constexpr int kPaletteSize = 8;

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
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

std::string fixed2(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << v;
  return out.str();
}

/// Shortest round-trip decimal, for tick labels.
std::string compact(double v) {
  if (v == 0.0) return "0";  // avoid "-0"
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range data_range(const std::vector<PlotSeries>& series, bool use_x) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const PlotSeries& s : series) {
    const Eigen::VectorXd& v = use_x ? s.x : s.y;
    const Eigen::VectorXd& other = use_x ? s.y : s.x;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v(i)) || !std::isfinite(other(i))) continue;
      lo = std::min(lo, v(i));
      hi = std::max(hi, v(i));
    }
  }
  if (!(lo <= hi))
    throw ConfigError("line_plot_svg: no finite samples to plot");
  if (lo == hi) {  // degenerate span: open up a unit window around the value
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

/// Ticks at a 1/2/5 x 10^k step chosen to land near `target` intervals.
std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (const double mult : {1.0, 2.0, 5.0, 10.0}) {
    step = mult * mag;
    if (span / step <= target) break;
  }
  std::vector<double> ticks;
  const double first = std::ceil(lo / step - 1e-9) * step;
  for (double t = first; t <= hi + 1e-9 * span; t += step) {
    // snap values that should be exact (clears accumulation noise)
    const double snapped = std::round(t / step) * step;
    ticks.push_back(snapped == 0.0 ? 0.0 : snapped);
  }
  return ticks;
}

}  // namespace

std::string line_plot_svg(const std::vector<PlotSeries>& series,
                          const PlotOptions& options) {
  if (series.empty()) throw ConfigError("line_plot_svg: no series");
  for (const PlotSeries& s : series)
    if (s.x.size() != s.y.size())
      throw ConfigError("line_plot_svg: series '" + s.name +
                        "' has mismatched x/y lengths");

  Range xr = data_range(series, true);
  Range yr = data_range(series, false);
  // a little headroom so curves do not sit on the frame
  const double pad = 0.04 * (yr.hi - yr.lo);
  yr.lo -= pad;
  yr.hi += pad;
  if (std::isfinite(options.x_min)) xr.lo = options.x_min;
  if (std::isfinite(options.x_max)) xr.hi = options.x_max;
  if (std::isfinite(options.y_min)) yr.lo = options.y_min;
  if (std::isfinite(options.y_max)) yr.hi = options.y_max;
  if (!(xr.lo < xr.hi) || !(yr.lo < yr.hi))
    throw ConfigError("line_plot_svg: empty axis range");

  const double w = options.width;
  const double h = options.height;
  const double plot_w = w - kLeft - kRight;
  const double plot_h = h - kTop - kBottom;
  const auto px = [&](double x) {
    return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w;
  };
  const auto py = [&](double y) {
    return kTop + (yr.hi - y) / (yr.hi - yr.lo) * plot_h;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width
      << "\" height=\"" << options.height << "\" viewBox=\"0 0 "
      << options.width << " " << options.height << "\">\n";
  svg << "<rect width=\"" << options.width << "\" height=\"" << options.height
      << "\" fill=\"white\"/>\n";
  svg << "<clipPath id=\"data\"><rect x=\"" << fixed2(kLeft) << "\" y=\""
      << fixed2(kTop) << "\" width=\"" << fixed2(plot_w) << "\" height=\""
      << fixed2(plot_h) << "\"/></clipPath>\n";

  // grid + tick labels
  svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  for (const double t : nice_ticks(xr.lo, xr.hi, 7)) {
    const double x = px(t);
    svg << "<line x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(kTop)
        << "\" x2=\"" << fixed2(x) << "\" y2=\"" << fixed2(kTop + plot_h)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << fixed2(x) << "\" y=\"" << fixed2(kTop + plot_h + 18)
        << "\" text-anchor=\"middle\">" << compact(t) << "</text>\n";
  }
  for (const double t : nice_ticks(yr.lo, yr.hi, 6)) {
    const double y = py(t);
    svg << "<line x1=\"" << fixed2(kLeft) << "\" y1=\"" << fixed2(y)
        << "\" x2=\"" << fixed2(kLeft + plot_w) << "\" y2=\"" << fixed2(y)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << fixed2(kLeft - 8) << "\" y=\"" << fixed2(y + 4)
        << "\" text-anchor=\"end\">" << compact(t) << "</text>\n";
  }
  svg << "</g>\n";

  // data
  svg << "<g clip-path=\"url(#data)\" fill=\"none\" stroke-width=\"1.8\">\n";
  for (size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    std::ostringstream points;
    int run = 0;              // finite samples in the current segment
    double last_x = 0.0, last_y = 0.0;
    const auto flush_segment = [&]() {
      if (run >= 2) {
        svg << "<polyline stroke=\"" << color << "\" points=\""
            << points.str() << "\"/>\n";
      } else if (run == 1) {  // lone point: draw a dot so it is not lost
        svg << "<circle fill=\"" << color << "\" stroke=\"none\" r=\"2\" cx=\""
            << fixed2(px(last_x)) << "\" cy=\"" << fixed2(py(last_y))
            << "\"/>\n";
      }
      points.str("");
      run = 0;
    };
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x(i)) || !std::isfinite(s.y(i))) {
        flush_segment();
        continue;
      }
      if (run > 0) points << ' ';
      points << fixed2(px(s.x(i))) << ',' << fixed2(py(s.y(i)));
      last_x = s.x(i);
      last_y = s.y(i);
      ++run;
    }
    flush_segment();
  }
  svg << "</g>\n";

  // frame
  svg << "<rect x=\"" << fixed2(kLeft) << "\" y=\"" << fixed2(kTop)
      << "\" width=\"" << fixed2(plot_w) << "\" height=\"" << fixed2(plot_h)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";

  // titles
  svg << "<g font-family=\"sans-serif\" fill=\"#111\">\n";
  if (!options.title.empty())
    svg << "<text x=\"" << fixed2(kLeft + plot_w / 2) << "\" y=\"24\" "
        << "font-size=\"16\" text-anchor=\"middle\">"
        << xml_escape(options.title) << "</text>\n";
  if (!options.x_label.empty())
    svg << "<text x=\"" << fixed2(kLeft + plot_w / 2) << "\" y=\""
        << fixed2(h - 14) << "\" font-size=\"13\" text-anchor=\"middle\">"
        << xml_escape(options.x_label) << "</text>\n";
  if (!options.y_label.empty())
    svg << "<text x=\"18\" y=\"" << fixed2(kTop + plot_h / 2)
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 "
        << "18 " << fixed2(kTop + plot_h / 2) << ")\">"
        << xml_escape(options.y_label) << "</text>\n";
  svg << "</g>\n";

  // legend (top-right corner of the data area)
  svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#111\">\n";
  for (size_t si = 0; si < series.size(); ++si) {
    const double y = kTop + 16 + 16 * static_cast<double>(si);
    const double x = kLeft + plot_w - 150;
    svg << "<line x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(y - 4)
        << "\" x2=\"" << fixed2(x + 22) << "\" y2=\"" << fixed2(y - 4)
        << "\" stroke=\"" << kPalette[si % kPaletteSize]
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fixed2(x + 28) << "\" y=\"" << fixed2(y) << "\">"
        << xml_escape(series[si].name) << "</text>\n";
  }
  svg << "</g>\n";

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace smpc
