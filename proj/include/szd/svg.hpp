#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace szd::svg {

// Minimal SVG builder with fixed number formatting, so output is byte-stable.
class Document {
 public:
  Document(double width, double height);

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none", double stroke_width = 0.0);
  void circle(double cx, double cy, double r, const std::string& fill, const std::string& stroke,
              double stroke_width);
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width);
  void text(double x, double y, const std::string& content, double size = 10.0,
            const std::string& anchor = "start", const std::string& fill = "#000");
  std::string str() const;

 private:
  double width_, height_;
  std::vector<std::string> body_;
};

std::string num(double v);
std::string escape(const std::string& s);
// Diverging blue-white-red ramp for t in [-1, 1].
std::string diverging(double t);

struct BarSeries {
  std::string title;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
  double y_max = 0.0;  // 0 picks the data maximum
};

std::string bar_chart(const BarSeries& series);

}  // namespace szd::svg
