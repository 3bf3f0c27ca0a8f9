#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace vpoc {

// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  double h = 0.0, s = 0.0, v = 0.0;
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
};

inline Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    out.h = 0.0;
  } else if (mx == r) {
    out.h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    out.h = 60.0 * ((b - r) / d + 2.0);
  } else {
    out.h = 60.0 * ((r - g) / d + 4.0);
  }
  if (out.h < 0.0) out.h += 360.0;
  return out;
}

inline Rgb8 hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0.0, g = 0.0, b = 0.0;
  if (h < 60.0) {
    r = c, g = x;
  } else if (h < 120.0) {
    r = x, g = c;
  } else if (h < 180.0) {
    g = c, b = x;
  } else if (h < 240.0) {
    g = x, b = c;
  } else if (h < 300.0) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  auto q = [&](double u) {
    return static_cast<std::uint8_t>(
        std::clamp(std::lround((u + m) * 255.0), 0L, 255L));
  };
  return {q(r), q(g), q(b)};
}

}  // namespace vpoc
