#pragma once

#include <string>
#include <vector>

#include "flab/analysis.hpp"

namespace flab::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
};

// Minimal dependency-free SVG line chart (one polyline per series, legend,
// min/max axis labels).
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

// Scatter plot with an optional IQR band polygon behind the points.
void write_scatter_chart(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<analysis::QuantileBand>& bands);

} // namespace flab::svg
