#pragma once

#include <cmath>
#include <optional>

namespace vpoc {

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace vpoc

namespace vpoc::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

// Origin plus unit direction.
struct Ray {
  Vec3 origin;
  Vec3 dir;
};

// Branchless orthonormal basis completion (Duff et al.). Deterministic in the
// input normal, which keeps leaf in-plane axes reproducible.
void orthonormal_basis(const Vec3& n, Vec3& e1, Vec3& e2);

// Nearest intersection parameter t > t_min, or nullopt.
std::optional<double> intersect_sphere(const Ray& ray, const Vec3& center,
                                       double radius, double t_min = 1e-9);

// Flat elliptical disk: center, unit normal, in-plane semi-axes a (along e1)
// and b (along e2) with (e1, e2) derived from the normal. The disk blocks
// rays from both sides.
std::optional<double> intersect_disk(const Ray& ray, const Vec3& center,
                                     const Vec3& normal, double a, double b,
                                     double t_min = 1e-9);

}  // namespace vpoc::geom
