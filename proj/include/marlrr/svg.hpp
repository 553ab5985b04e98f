#pragma once

#include <string>
#include <vector>

namespace marlrr {

/// One curve: mean with a ±se band at each x.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> se;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Bars grouped by category, one bar per label within each group.
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> bar_labels;
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;  // [group][bar]
  std::vector<std::vector<double>> errors;  // same shape, may be empty
};

/// Standalone SVG: one polyline and one band polygon per series, axis ticks
/// and a legend. Output depends only on the input.
std::string line_chart_svg(const LineChart& chart);
std::string bar_chart_svg(const BarChart& chart);

/// Mean and standard error (sample sd / sqrt(n), 0 when n = 1).
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& samples);

/// Roughly `target` evenly spaced round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

std::string xml_escape(const std::string& s);

}  // namespace marlrr
