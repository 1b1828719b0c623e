#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smpc {

/// One named curve.  x and y must have equal length; NaN samples break the
/// polyline so gaps stay visible instead of being interpolated over.
struct PlotSeries {
  std::string name;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 800;
  int height = 500;
  /// Axis limits; NaN = derived from the data with a small padding.
  double x_min = std::numeric_limits<double>::quiet_NaN();
  double x_max = std::numeric_limits<double>::quiet_NaN();
  double y_min = std::numeric_limits<double>::quiet_NaN();
  double y_max = std::numeric_limits<double>::quiet_NaN();
};

/// Render line plots as a standalone SVG document.  Output is deterministic:
/// the same inputs produce the same bytes.  Throws ConfigError on malformed
/// series (length mismatch, no finite samples anywhere).
std::string line_plot_svg(const std::vector<PlotSeries>& series,
                          const PlotOptions& options);

}  // namespace smpc
