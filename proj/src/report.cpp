#include "clsa/report.hpp"

#include "clsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace clsa::report {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
         "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle",
                 const std::string& extra = "") {
  return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor + "\"" + extra +
         ">" + escape(s) + "</text>\n";
}

}  // namespace

std::string line_chart_svg(const LineChart& chart) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw InputError("series '" + s.name + "' has mismatched lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream out;
  out << header(kWidth, kHeight);
  out << text(kWidth / 2, 22, chart.title, "middle", " font-size=\"15\"");
  out << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    out << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << fmt(kTop + ph) << "\" x2=\"" << fmt(px(xv))
        << "\" y2=\"" << fmt(kTop + ph + 5) << "\" stroke=\"#333\"/>\n";
    out << text(px(xv), kTop + ph + 18, tick_label(xv));
    out << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(py(yv)) << "\" x2=\"" << fmt(kLeft)
        << "\" y2=\"" << fmt(py(yv)) << "\" stroke=\"#333\"/>\n";
    out << text(kLeft - 8, py(yv) + 4, tick_label(yv), "end");
  }
  out << text(kLeft + pw / 2, kHeight - 12, chart.x_label);
  out << text(16, kTop + ph / 2, chart.y_label, "middle",
              " transform=\"rotate(-90 16 " + fmt(kTop + ph / 2) + ")\"");

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& ser = chart.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
      pts += fmt(px(ser.x[i])) + "," + fmt(py(ser.y[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts
        << "\"/>\n";
    const double ly = kTop + 10 + 18 * static_cast<double>(s);
    out << "<line x1=\"" << fmt(kWidth - kRight + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
        << fmt(kWidth - kRight + 32) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << text(kWidth - kRight + 38, ly + 4, ser.name, "start");
  }
  out << "</svg>\n";
  return out.str();
}

std::string confusion_svg(const std::array<std::array<long, 2>, 2>& counts,
                          const std::string& title) {
  constexpr double cell = 130, left = 110, top = 60;
  std::ostringstream out;
  out << header(left + 2 * cell + 30, top + 2 * cell + 60);
  out << text(left + cell, 28, title, "middle", " font-size=\"15\"");
  const char* names[] = {"unpopular", "popular"};
  for (int t = 0; t < 2; ++t) {
    const long row = counts[t][0] + counts[t][1];
    for (int p = 0; p < 2; ++p) {
      const double rate = row ? static_cast<double>(counts[t][p]) / row : 0.0;
      const int shade = static_cast<int>(std::lround(255 - 200 * rate));
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02xff", shade, shade);
      const double x = left + p * cell, y = top + t * cell;
      out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell)
          << "\" height=\"" << fmt(cell) << "\" fill=\"" << color << "\" stroke=\"#333\"/>\n";
      out << text(x + cell / 2, y + cell / 2 - 4, std::to_string(counts[t][p]), "middle",
                  " font-size=\"16\"");
      out << text(x + cell / 2, y + cell / 2 + 16, row ? fmt(100.0 * rate) + "%" : "n/a");
    }
    out << text(left - 8, top + t * cell + cell / 2 + 4, names[t], "end");
    out << text(left + t * cell + cell / 2, top + 2 * cell + 20, names[t]);
  }
  out << text(left + cell, top + 2 * cell + 45, "predicted");
  out << text(20, top + cell, "true", "middle",
              " transform=\"rotate(-90 20 " + fmt(top + cell) + ")\"");
  out << "</svg>\n";
  return out.str();
}

}  // namespace clsa::report
