#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "frmab/cli.hpp"

namespace frmab::cli {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void axes(std::ostringstream& out, const Frame& f, const std::string& title,
          const std::string& xlabel, const std::string& ylabel) {
  out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << esc(title) << "</text>\n";
  const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight, ey = kTop;
  out << "<path d=\"M" << bx << ' ' << ey << " V" << by << " H" << ex
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << by + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(xv) << "</text>\n";
    out << "<text x=\"" << bx - 6 << "\" y=\"" << num(f.py(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick(yv) << "</text>\n";
  }
  out << "<text x=\"" << (bx + ex) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << esc(xlabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (by + ey) / 2 << "\" text-anchor=\"middle\" font-size=\"13\""
      << " transform=\"rotate(-90 16 " << (by + ey) / 2 << ")\">" << esc(ylabel) << "</text>\n";
}

std::string open_svg() {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
      << "\" font-family=\"sans-serif\">\n";
  return out.str();
}

}  // namespace

std::string render_svg(const LinePlot& plot) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series) {
    for (double v : s.xs) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.ys) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 = x0 + 1.0;
  if (!(y1 > y0)) y0 -= 0.5, y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  const Frame f{x0, x1, y0 - pad, y1 + pad};

  std::ostringstream out;
  out << open_svg();
  axes(out, f, plot.title, plot.xlabel, plot.ylabel);
  for (double v : plot.vlines) {
    if (v < x0 || v > x1) continue;
    out << "<line x1=\"" << num(f.px(v)) << "\" y1=\"" << kTop << "\" x2=\"" << num(f.px(v))
        << "\" y2=\"" << kHeight - kBottom
        << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" d=\"";
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (i == 0) {
        out << 'M' << num(f.px(s.xs[i])) << ' ' << num(f.py(s.ys[i]));
      } else if (s.step) {
        out << " H" << num(f.px(s.xs[i])) << " V" << num(f.py(s.ys[i]));
      } else {
        out << " L" << num(f.px(s.xs[i])) << ' ' << num(f.py(s.ys[i]));
      }
    }
    out << "\"/>\n";
    const double ly = kTop + 18.0 * k + 8;
    out << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly << "\" x2=\""
        << kWidth - kRight + 32 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kWidth - kRight + 38 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << esc(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_svg(const ClassMap& map) {
  std::ostringstream out;
  out << open_svg();
  if (map.xs.size() < 2 || map.ys.size() < 2) {
    out << "</svg>\n";
    return out.str();
  }
  const Frame f{map.xs.front(), map.xs.back(), map.ys.front(), map.ys.back()};
  axes(out, f, map.title, map.xlabel, map.ylabel);
  const double cw = (f.px(map.xs[1]) - f.px(map.xs[0]));
  const double ch = (f.py(map.ys[0]) - f.py(map.ys[1]));
  for (std::size_t i = 0; i < map.ys.size() && i < map.values.size(); ++i) {
    for (std::size_t j = 0; j < map.xs.size() && j < map.values[i].size(); ++j) {
      const int c = map.values[i][j];
      out << "<rect x=\"" << num(f.px(map.xs[j]) - cw / 2) << "\" y=\""
          << num(f.py(map.ys[i]) - ch / 2) << "\" width=\"" << num(cw) << "\" height=\""
          << num(ch) << "\" fill=\"" << kPalette[static_cast<std::size_t>(c) % std::size(kPalette)]
          << "\" fill-opacity=\"0.55\" stroke=\"none\"/>\n";
    }
  }
  for (std::size_t c = 0; c < map.class_names.size(); ++c) {
    const double ly = kTop + 18.0 * c + 8;
    out << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly - 6
        << "\" width=\"14\" height=\"12\" fill=\"" << kPalette[c % std::size(kPalette)]
        << "\" fill-opacity=\"0.55\"/>\n";
    out << "<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << esc(map.class_names[c]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace frmab::cli
