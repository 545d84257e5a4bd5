#ifndef CRASHSTACK_SVG_HPP_
#define CRASHSTACK_SVG_HPP_

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace crashstack::svg {

// Self-contained SVG documents (no external fonts, styles or scripts).

// Observed on x, predicted on y, with a dashed y = x reference line.
std::string scatter(std::span<const double> observed,
                    std::span<const double> predicted, const std::string& title);

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

// Horizontal bars, largest first.
std::string bar_chart(const std::vector<std::pair<std::string, double>>& bars,
                      const std::string& title, const std::string& value_label);

}  // namespace crashstack::svg

#endif  // CRASHSTACK_SVG_HPP_
