#include "vpoc/svg.hpp"

#include <cmath>
#include <cstdio>

namespace vpoc::svg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
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

std::string points_attr(const std::vector<std::pair<double, double>>& pts) {
  std::string out;
  for (const auto& [x, y] : pts) {
    if (!out.empty()) out += " ";
    out += fmt(x) + "," + fmt(y);
  }
  return out;
}

}  // namespace

Doc::Doc(double width, double height) : width_(width), height_(height) {}

void Doc::line(double x1, double y1, double x2, double y2,
               const std::string& stroke, double stroke_width) {
  body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" +
           fmt(x2) + "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke +
           "\" stroke-width=\"" + fmt(stroke_width) + "\"/>\n";
}

void Doc::polyline(const std::vector<std::pair<double, double>>& pts,
                   const std::string& stroke, double stroke_width) {
  body_ += "<polyline points=\"" + points_attr(pts) + "\" fill=\"none\" " +
           "stroke=\"" + stroke + "\" stroke-width=\"" + fmt(stroke_width) +
           "\"/>\n";
}

void Doc::polygon(const std::vector<std::pair<double, double>>& pts,
                  const std::string& fill, const std::string& stroke) {
  body_ += "<polygon points=\"" + points_attr(pts) + "\" fill=\"" + fill +
           "\" stroke=\"" + stroke + "\"/>\n";
}

void Doc::circle(double cx, double cy, double r, const std::string& fill,
                 const std::string& stroke, double stroke_width) {
  body_ += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" +
           fmt(r) + "\" fill=\"" + fill + "\" stroke=\"" + stroke +
           "\" stroke-width=\"" + fmt(stroke_width) + "\"/>\n";
}

void Doc::rect(double x, double y, double w, double h, const std::string& fill,
               const std::string& stroke) {
  body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" +
           fmt(w) + "\" height=\"" + fmt(h) + "\" fill=\"" + fill +
           "\" stroke=\"" + stroke + "\"/>\n";
}

void Doc::text(double x, double y, const std::string& s, double size,
               const std::string& fill, const std::string& anchor) {
  body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" +
           fmt(size) + "\" font-family=\"sans-serif\" fill=\"" + fill +
           "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string Doc::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width_) +
         "\" height=\"" + fmt(height_) + "\" viewBox=\"0 0 " + fmt(width_) +
         " " + fmt(height_) + "\">\n<rect width=\"100%\" height=\"100%\" " +
         "fill=\"#ffffff\"/>\n" + body_ + "</svg>\n";
}

std::vector<std::pair<double, double>> star_points(double cx, double cy,
                                                   double r) {
  std::vector<std::pair<double, double>> pts;
  const double inner = 0.45 * r;
  for (int i = 0; i < 10; ++i) {
    const double ang = -M_PI / 2.0 + i * M_PI / 5.0;
    const double rr = (i % 2 == 0) ? r : inner;
    pts.emplace_back(cx + rr * std::cos(ang), cy + rr * std::sin(ang));
  }
  return pts;
}

}  // namespace vpoc::svg
