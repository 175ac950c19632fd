#pragma once

#include <string>
#include <vector>

namespace coda::cli::svg {

struct Series {
    std::string label;
    std::string color; // any SVG color
    std::vector<double> x;
    std::vector<double> y;
};

/// Static scatter plot with axes, ticks and a legend. Output is fully
/// deterministic for identical inputs.
std::string scatter_plot(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series);

struct IntervalBox {
    std::string label;
    double mean;
    double lo50, hi50; // box
    double lo95, hi95; // whiskers
};

/// Horizontal mean-and-interval chart (box = 50% interval, whiskers = 95%).
/// `reference` draws a vertical guide line (e.g. 0 or 1).
std::string interval_plot(const std::string& title, const std::string& x_label,
                          const std::vector<IntervalBox>& boxes, double reference);

} // namespace coda::cli::svg
