#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vpoc::svg {

// Minimal SVG document builder; enough for trajectory plots, bar charts and
// curve plots. Coordinates are written with fixed precision so identical
// inputs serialize to identical bytes.
class Doc {
 public:
  Doc(double width, double height);

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double stroke_width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke, double stroke_width = 1.0);
  void polygon(const std::vector<std::pair<double, double>>& pts,
               const std::string& fill, const std::string& stroke = "none");
  void circle(double cx, double cy, double r, const std::string& fill,
              const std::string& stroke = "none", double stroke_width = 1.0);
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none");
  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& fill = "#000",
            const std::string& anchor = "start");

  std::string str() const;

 private:
  std::string body_;
  double width_, height_;
};

// Five-pointed star centered at (cx, cy) with outer radius r.
std::vector<std::pair<double, double>> star_points(double cx, double cy,
                                                   double r);

}  // namespace vpoc::svg
