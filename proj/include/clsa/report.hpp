#pragma once

#include <array>
#include <string>
#include <vector>

namespace clsa::report {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Static SVG documents. Output depends only on the input values.
std::string line_chart_svg(const LineChart& chart);
// counts[truth][prediction]; cells show counts and row percentages.
std::string confusion_svg(const std::array<std::array<long, 2>, 2>& counts,
                          const std::string& title);

}  // namespace clsa::report
