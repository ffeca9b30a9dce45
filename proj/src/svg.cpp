#include "szd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace szd::svg {

std::string num(double v) {
  if (std::abs(v) < 5e-4) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
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

std::string diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  int r, g, b;
  if (t >= 0) {
    r = 255;
    g = b = static_cast<int>(std::lround(255 * (1 - t)));
  } else {
    b = 255;
    r = g = static_cast<int>(std::lround(255 * (1 + t)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

Document::Document(double width, double height) : width_(width), height_(height) {}

void Document::rect(double x, double y, double w, double h, const std::string& fill,
                    const std::string& stroke, double stroke_width) {
  body_.push_back("<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
                  "\" height=\"" + num(h) + "\" fill=\"" + fill + "\" stroke=\"" + stroke +
                  "\" stroke-width=\"" + num(stroke_width) + "\"/>");
}

void Document::circle(double cx, double cy, double r, const std::string& fill,
                      const std::string& stroke, double stroke_width) {
  body_.push_back("<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) +
                  "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
                  num(stroke_width) + "\"/>");
}

void Document::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                    double stroke_width) {
  body_.push_back("<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
                  "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
                  num(stroke_width) + "\"/>");
}

void Document::text(double x, double y, const std::string& content, double size,
                    const std::string& anchor, const std::string& fill) {
  body_.push_back("<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) +
                  "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
                  "\">" + escape(content) + "</text>");
}

std::string Document::str() const {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) +
                    "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " +
                    num(height_) + "\">\n";
  for (const auto& b : body_) out += "  " + b + "\n";
  out += "</svg>\n";
  return out;
}

std::string bar_chart(const BarSeries& series) {
  const double bar_w = 28.0, gap = 12.0, left = 60.0, top = 40.0, plot_h = 220.0, bottom = 80.0;
  const double n = static_cast<double>(series.values.size());
  const double width = left + std::max(1.0, n) * (bar_w + gap) + gap + 20.0;
  Document doc(width, top + plot_h + bottom);
  double y_max = series.y_max;
  if (y_max <= 0.0) {
    for (double v : series.values) y_max = std::max(y_max, v);
    if (y_max <= 0.0) y_max = 1.0;
  }
  doc.rect(0, 0, width, top + plot_h + bottom, "#fff");
  doc.text(width / 2, 22, series.title, 14, "middle");
  doc.line(left, top, left, top + plot_h, "#000", 1);
  doc.line(left, top + plot_h, width - 10, top + plot_h, "#000", 1);
  for (int i = 0; i <= 4; ++i) {
    const double v = y_max * i / 4.0;
    const double y = top + plot_h - plot_h * i / 4.0;
    doc.line(left - 4, y, left, y, "#000", 1);
    doc.text(left - 6, y + 3, num(v), 9, "end");
  }
  doc.text(14, top + plot_h / 2, series.y_label, 10, "middle");
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    const double v = std::clamp(series.values[i], 0.0, y_max);
    const double h = plot_h * v / y_max;
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    doc.rect(x, top + plot_h - h, bar_w, h, "#4c72b0");
    doc.text(x + bar_w / 2, top + plot_h - h - 4, num(series.values[i]), 8, "middle");
    const std::string label = i < series.labels.size() ? series.labels[i] : std::to_string(i);
    doc.text(x + bar_w / 2, top + plot_h + 14, label, 9, "middle");
  }
  return doc.str();
}

}  // namespace szd::svg
