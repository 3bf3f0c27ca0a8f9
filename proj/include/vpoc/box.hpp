#pragma once

#include <algorithm>

namespace vpoc {

// Integer pixel box, half-open: x in [x_min, x_max), y in [y_min, y_max).
struct BoundingBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long long area() const {
    return static_cast<long long>(width()) * height();
  }
  bool empty() const { return x_max <= x_min || y_max <= y_min; }

  BoundingBox clipped(int frame_w, int frame_h) const {
    return {std::max(x_min, 0), std::max(y_min, 0), std::min(x_max, frame_w),
            std::min(y_max, frame_h)};
  }

  bool operator==(const BoundingBox&) const = default;
};

}  // namespace vpoc
