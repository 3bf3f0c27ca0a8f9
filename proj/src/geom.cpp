#include "vpoc/geom.hpp"

namespace vpoc::geom {

void orthonormal_basis(const Vec3& n, Vec3& e1, Vec3& e2) {
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double b = n.x * n.y * a;
  e1 = {1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x};
  e2 = {b, sign + n.y * n.y * a, -n.y};
}

std::optional<double> intersect_sphere(const Ray& ray, const Vec3& center,
                                       double radius, double t_min) {
  const Vec3 oc = ray.origin - center;
  const double b = dot(oc, ray.dir);
  const double c = dot(oc, oc) - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= t_min) t = -b + sq;
  if (t <= t_min) return std::nullopt;
  return t;
}

std::optional<double> intersect_disk(const Ray& ray, const Vec3& center,
                                     const Vec3& normal, double a, double b,
                                     double t_min) {
  const double denom = dot(ray.dir, normal);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = dot(center - ray.origin, normal) / denom;
  if (t <= t_min) return std::nullopt;
  const Vec3 p = ray.origin + t * ray.dir - center;
  Vec3 e1, e2;
  orthonormal_basis(normal, e1, e2);
  const double s = dot(p, e1) / a;
  const double u = dot(p, e2) / b;
  if (s * s + u * u > 1.0) return std::nullopt;
  return t;
}

}  // namespace vpoc::geom
