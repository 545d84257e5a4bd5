#include "crashstack/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "crashstack/text.hpp"

namespace crashstack::svg {
namespace {

constexpr double kWidth = 480, kHeight = 480;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

struct Range {
  double lo = 0, hi = 1;
};

Range padded(double lo, double hi) {
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

struct Frame {
  Range x, y;
  double width = kWidth, height = kHeight;
  double px(double v) const {
    return kLeft + (v - x.lo) / (x.hi - x.lo) * (width - kLeft - kRight);
  }
  double py(double v) const {
    return height - kBottom - (v - y.lo) / (y.hi - y.lo) * (height - kTop - kBottom);
  }
};

void open_doc(std::ostringstream& out, double w, double h, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w)
      << "\" height=\"" << num(h) << "\" viewBox=\"0 0 " << num(w) << ' '
      << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << escape(title) << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f, const std::string& xl,
          const std::string& yl) {
  const double x0 = kLeft, x1 = f.width - kRight;
  const double y0 = f.height - kBottom, y1 = kTop;
  out << "<g stroke=\"black\" stroke-width=\"1\">"
      << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1)
      << "\" y2=\"" << num(y0) << "\"/>"
      << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0)
      << "\" y2=\"" << num(y1) << "\"/></g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = f.x.lo + (f.x.hi - f.x.lo) * k / 4;
    const double vy = f.y.lo + (f.y.hi - f.y.lo) * k / 4;
    out << "<text x=\"" << num(f.px(vx)) << "\" y=\"" << num(y0 + 15)
        << "\" text-anchor=\"middle\">" << format_fixed(vx, 1) << "</text>"
        << "<text x=\"" << num(x0 - 5) << "\" y=\"" << num(f.py(vy) + 4)
        << "\" text-anchor=\"end\">" << format_fixed(vy, 1) << "</text>\n";
  }
  out << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(f.height - 12)
      << "\" text-anchor=\"middle\">" << escape(xl) << "</text>\n"
      << "<text transform=\"translate(16," << num((y0 + y1) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(yl) << "</text>\n";
}

}  // namespace

std::string scatter(std::span<const double> observed,
                    std::span<const double> predicted, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : observed) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : predicted) lo = std::min(lo, v), hi = std::max(hi, v);
  if (observed.empty()) lo = 0, hi = 1;
  // Shared range on both axes keeps the reference line at 45 degrees.
  const Range r = padded(lo, hi);
  Frame f{r, r};
  std::ostringstream out;
  open_doc(out, kWidth, kHeight, title);
  axes(out, f, "Observed crashes", "Predicted crashes");
  out << "<line class=\"reference\" x1=\"" << num(f.px(r.lo)) << "\" y1=\""
      << num(f.py(r.lo)) << "\" x2=\"" << num(f.px(r.hi)) << "\" y2=\""
      << num(f.py(r.hi))
      << "\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>\n<g fill=\"" << kPalette[0]
      << "\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < observed.size(); ++i) {
    out << "<circle cx=\"" << num(f.px(observed[i])) << "\" cy=\""
        << num(f.py(predicted[i])) << "\" r=\"2.5\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xlo = std::min(xlo, x), xhi = std::max(xhi, x);
      ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  }
  if (!std::isfinite(xlo)) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  Frame f{padded(xlo, xhi), padded(ylo, yhi), 560, 400};
  std::ostringstream out;
  open_doc(out, f.width, f.height, title);
  axes(out, f, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[k].points) {
      out << num(f.px(x)) << ',' << num(f.py(y)) << ' ';
    }
    out << "\"/>\n";
    if (series.size() > 1) {
      out << "<text x=\"" << num(f.width - kRight - 4) << "\" y=\""
          << num(kTop + 14 * (k + 1)) << "\" text-anchor=\"end\" fill=\"" << color
          << "\">" << escape(series[k].label) << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart(const std::vector<std::pair<std::string, double>>& bars,
                      const std::string& title, const std::string& value_label) {
  auto sorted = bars;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const double label_w = 150, bar_h = 18, gap = 6;
  const double width = 560;
  const double height = kTop + sorted.size() * (bar_h + gap) + kBottom;
  double vmax = 0;
  for (const auto& b : sorted) vmax = std::max(vmax, b.second);
  if (!(vmax > 0)) vmax = 1;
  std::ostringstream out;
  open_doc(out, width, height, title);
  const double span = width - label_w - kRight - 50;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double y = kTop + k * (bar_h + gap);
    const double w = std::max(0.0, sorted[k].second) / vmax * span;
    out << "<text x=\"" << num(label_w - 6) << "\" y=\"" << num(y + 13)
        << "\" text-anchor=\"end\">" << escape(sorted[k].first) << "</text>"
        << "<rect x=\"" << num(label_w) << "\" y=\"" << num(y) << "\" width=\""
        << num(w) << "\" height=\"" << num(bar_h) << "\" fill=\"" << kPalette[0]
        << "\"/>"
        << "<text x=\"" << num(label_w + w + 4) << "\" y=\"" << num(y + 13) << "\">"
        << format_fixed(sorted[k].second, 2) << "</text>\n";
  }
  out << "<text x=\"" << num(label_w + span / 2) << "\" y=\"" << num(height - 15)
      << "\" text-anchor=\"middle\">" << escape(value_label) << "</text>\n</svg>\n";
  return out.str();
}

}  // namespace crashstack::svg
