#include "vpoc/scene.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "vpoc/color.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Golden angle; spreads visibility sample azimuths evenly for any count.
constexpr double kGoldenAngle = 2.399963229728653;

double unit_from_hash(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double jitter(std::uint64_t seed, const char* name, std::uint64_t index) {
  return unit_from_hash(rng::derive(seed, name, index));
}

}  // namespace

geom::Vec3 CameraPose::position() const {
  const double sp = std::sin(phi);
  return {radius * sp * std::cos(theta), radius * sp * std::sin(theta),
          radius * std::cos(phi)};
}

double CameraIntrinsics::focal_px() const {
  return width / (2.0 * std::tan(fov / 2.0));
}

geom::Vec3 CameraFrame::world_to_camera(const geom::Vec3& w) const {
  const geom::Vec3 d = w - origin;
  return {geom::dot(d, right), geom::dot(d, down), geom::dot(d, forward)};
}

geom::Ray CameraFrame::pixel_ray(int px, int py,
                                 const CameraIntrinsics& intr) const {
  const double f = intr.focal_px();
  const double u = (px + 0.5 - intr.width / 2.0) / f;
  const double v = (py + 0.5 - intr.height / 2.0) / f;
  return {origin, geom::normalized(right * u + down * v + forward)};
}

void GeneratorConfig::validate() const {
  auto fail = [](const char* msg) { throw ConfigError(msg); };
  if (berry_count_min < 1 || berry_count_max < berry_count_min)
    fail("berry count range invalid");
  if (berry_radius_min <= 0.0 || berry_radius_max < berry_radius_min)
    fail("berry radius range invalid");
  if (ripe_prob < 0.0 || ripe_prob > 1.0) fail("ripe_prob outside [0, 1]");
  if (leaf_count_min < 0 || leaf_count_max < leaf_count_min)
    fail("leaf count range invalid");
  if (leaf_semi_axis_min <= 0.0 || leaf_semi_axis_max < leaf_semi_axis_min)
    fail("leaf semi-axis range invalid");
  if (plant_radius <= 0.0 || plant_height <= 0.0)
    fail("plant cylinder dimensions must be positive");
  if (berry_radius_max >= plant_radius)
    fail("berry radius must be smaller than the plant radius");
  if (berry_radius_max >= plant_height)
    fail("berry radius must be smaller than the plant height");
}

namespace {

// Canopy-shadow criterion used by the generator's occlusion guarantee: a leaf
// counts as shadowing a berry when it sits at or above the berry and their
// footprints can overlap in the horizontal plane.
bool leaf_above_berry(const Leaf& l, const Berry& b) {
  if (l.center.z < b.center.z) return false;
  const double dx = l.center.x - b.center.x;
  const double dy = l.center.y - b.center.y;
  const double reach = b.radius + std::max(l.semi_axes[0], l.semi_axes[1]);
  return dx * dx + dy * dy <= reach * reach;
}

}  // namespace

bool any_leaf_above_berry(const PlantScene& sc) {
  for (const auto& l : sc.leaves)
    for (const auto& b : sc.berries)
      if (leaf_above_berry(l, b)) return true;
  return false;
}

PlantScene generate_plant(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  rng::Stream rs(rng::derive(seed, "plant-geometry"));
  PlantScene sc;
  sc.seed = seed;

  const auto n_berries = rs.uniform_int(cfg.berry_count_min,
                                        cfg.berry_count_max);
  sc.berries.reserve(static_cast<std::size_t>(n_berries));
  for (std::int64_t i = 0; i < n_berries; ++i) {
    Berry b;
    b.radius = rs.uniform(cfg.berry_radius_min, cfg.berry_radius_max);
    const double rad = cfg.plant_radius * std::sqrt(rs.uniform());
    const double ang = rs.uniform(0.0, 2.0 * kPi);
    // Berries rest on or above the ground plane.
    const double z = rs.uniform(b.radius, cfg.plant_height);
    b.center = {rad * std::cos(ang), rad * std::sin(ang), z};
    b.ripeness = rs.bernoulli(cfg.ripe_prob) ? Ripeness::Ripe
                                             : Ripeness::Unripe;
    sc.berries.push_back(b);
  }

  const auto n_leaves = rs.uniform_int(cfg.leaf_count_min, cfg.leaf_count_max);
  sc.leaves.reserve(static_cast<std::size_t>(n_leaves));
  for (std::int64_t i = 0; i < n_leaves; ++i) {
    Leaf l;
    // Leaves form a canopy: mostly above the berries, mostly face-up, and
    // allowed to spill slightly past the plant cylinder.
    const double rad = 1.1 * cfg.plant_radius * std::sqrt(rs.uniform());
    const double ang = rs.uniform(0.0, 2.0 * kPi);
    const double z = rs.uniform(0.4 * cfg.plant_height, 1.4 * cfg.plant_height);
    l.center = {rad * std::cos(ang), rad * std::sin(ang), z};
    const double tilt = rs.uniform(0.0, 0.9);
    const double azim = rs.uniform(0.0, 2.0 * kPi);
    l.normal = {std::sin(tilt) * std::cos(azim),
                std::sin(tilt) * std::sin(azim), std::cos(tilt)};
    l.semi_axes = {rs.uniform(cfg.leaf_semi_axis_min, cfg.leaf_semi_axis_max),
                   rs.uniform(cfg.leaf_semi_axis_min, cfg.leaf_semi_axis_max)};
    sc.leaves.push_back(l);
  }

  // Guarantee at least one occlusion challenge: if no sampled leaf shadows a
  // berry, replace the last leaf with one parked directly above berry 0.
  if (!sc.leaves.empty() && !sc.berries.empty() && !any_leaf_above_berry(sc)) {
    const Berry& b = sc.berries.front();
    Leaf l;
    l.center = {b.center.x, b.center.y, b.center.z + b.radius + 0.03};
    l.normal = {0.0, 0.0, 1.0};
    const double mid = 0.5 * (cfg.leaf_semi_axis_min + cfg.leaf_semi_axis_max);
    l.semi_axes = {mid, mid};
    sc.leaves.back() = l;
  }
  return sc;
}

CameraFrame pose_to_world(const CameraPose& pose) {
  if (pose.radius <= 0.0)
    throw GeometryError("camera radius must be positive");
  CameraFrame fr;
  fr.origin = pose.position();
  fr.forward = geom::normalized(-fr.origin);
  const geom::Vec3 z{0.0, 0.0, 1.0};
  const geom::Vec3 up_raw = z - geom::dot(z, fr.forward) * fr.forward;
  const double n = geom::norm(up_raw);
  if (n < 1e-12)
    throw GeometryError("degenerate pose: up vector undefined at the zenith");
  const geom::Vec3 up = up_raw * (1.0 / n);
  fr.down = -up;
  fr.right = geom::cross(fr.forward, up);
  return fr;
}

std::optional<SilhouetteExtent> silhouette_extent(
    const Berry& berry, const CameraPose& pose, const CameraIntrinsics& intr) {
  const CameraFrame fr = pose_to_world(pose);
  const geom::Vec3 c = fr.world_to_camera(berry.center);
  const double rho = berry.radius;
  const double dist2 = geom::dot(c, c);
  if (dist2 <= rho * rho)
    throw GeometryError("camera inside berry");
  if (c.z <= 1e-9) return std::nullopt;  // fully or essentially behind
  const double f = intr.focal_px();
  if (c.z <= rho) {
    // Sphere straddles the image plane; its projection is unbounded, so
    // report an extent that clips to the whole frame.
    constexpr double big = 1e9;
    return SilhouetteExtent{-big, big, -big, big};
  }
  // Per-axis tangent lines through the pinhole: for center offset a at depth
  // d, the extreme image slopes are (a d +- rho sqrt(a^2 + d^2 - rho^2)) /
  // (d^2 - rho^2).
  auto axis_extent = [&](double a, double d) {
    const double disc = a * a + d * d - rho * rho;
    const double root = rho * std::sqrt(disc);
    const double denom = d * d - rho * rho;
    return std::pair<double, double>{(a * d - root) / denom,
                                     (a * d + root) / denom};
  };
  const auto [mx_lo, mx_hi] = axis_extent(c.x, c.z);
  const auto [my_lo, my_hi] = axis_extent(c.y, c.z);
  SilhouetteExtent e;
  e.u_min = f * mx_lo + intr.width / 2.0;
  e.u_max = f * mx_hi + intr.width / 2.0;
  e.v_min = f * my_lo + intr.height / 2.0;
  e.v_max = f * my_hi + intr.height / 2.0;
  return e;
}

std::optional<BoundingBox> project_sphere(const Berry& berry,
                                          const CameraPose& pose,
                                          const CameraIntrinsics& intr) {
  const auto e = silhouette_extent(berry, pose, intr);
  if (!e) return std::nullopt;
  auto clamp_px = [](double v) {
    return std::clamp(v, -1e6, 1e6);
  };
  // A pixel belongs to the box iff its center coordinate px + 0.5 lies inside
  // the continuous extent; that makes the box exactly the set of pixels whose
  // center rays can intersect the sphere.
  BoundingBox box;
  box.x_min = static_cast<int>(std::ceil(clamp_px(e->u_min) - 0.5));
  box.x_max = static_cast<int>(std::floor(clamp_px(e->u_max) - 0.5)) + 1;
  box.y_min = static_cast<int>(std::ceil(clamp_px(e->v_min) - 0.5));
  box.y_max = static_cast<int>(std::floor(clamp_px(e->v_max) - 0.5)) + 1;
  box = box.clipped(intr.width, intr.height);
  if (box.empty()) return std::nullopt;
  return box;
}

namespace {

// True if the open segment from `from` toward `to` is blocked by a scene
// occluder; `skip_berry` excludes the berry the sample point sits on.
bool segment_blocked(const PlantScene& sc, const geom::Vec3& from,
                     const geom::Vec3& to, std::ptrdiff_t skip_berry) {
  const geom::Vec3 d = to - from;
  const double len = geom::norm(d);
  const geom::Ray ray{from, d * (1.0 / len)};
  const double t_max = len - 1e-9;
  constexpr double t_min = 1e-7;
  for (std::size_t i = 0; i < sc.berries.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) == skip_berry) continue;
    const auto& b = sc.berries[i];
    if (auto t = geom::intersect_sphere(ray, b.center, b.radius, t_min);
        t && *t < t_max)
      return true;
  }
  for (const auto& l : sc.leaves) {
    if (auto t = geom::intersect_disk(ray, l.center, l.normal, l.semi_axes[0],
                                      l.semi_axes[1], t_min);
        t && *t < t_max)
      return true;
  }
  return false;
}

double visible_fraction_impl(const PlantScene& sc, const Berry& berry,
                             std::ptrdiff_t berry_index,
                             const CameraPose& pose, int samples) {
  if (samples < 1) throw ConfigError("visibility sample count must be >= 1");
  const geom::Vec3 cam = pose.position();
  const geom::Vec3 to_cam = cam - berry.center;
  const double dist = geom::norm(to_cam);
  if (dist <= berry.radius) throw GeometryError("camera inside berry");
  const geom::Vec3 w = to_cam * (1.0 / dist);
  geom::Vec3 e1, e2;
  geom::orthonormal_basis(w, e1, e2);
  int unblocked = 0;
  for (int i = 0; i < samples; ++i) {
    // Fibonacci lattice over the camera-facing half of the surface.
    const double cos_psi = (i + 0.5) / samples;
    const double sin_psi = std::sqrt(std::max(0.0, 1.0 - cos_psi * cos_psi));
    const double az = i * kGoldenAngle;
    const geom::Vec3 n = w * cos_psi +
                         (e1 * std::cos(az) + e2 * std::sin(az)) * sin_psi;
    const geom::Vec3 p = berry.center + n * berry.radius;
    if (!segment_blocked(sc, p, cam, berry_index)) ++unblocked;
  }
  return static_cast<double>(unblocked) / samples;
}

}  // namespace

double visible_fraction(const PlantScene& sc, std::size_t berry_index,
                        const CameraPose& pose, int samples) {
  if (berry_index >= sc.berries.size())
    throw GeometryError("berry index out of range");
  return visible_fraction_impl(sc, sc.berries[berry_index],
                               static_cast<std::ptrdiff_t>(berry_index), pose,
                               samples);
}

double visible_fraction(const Berry& berry, const PlantScene& sc,
                        const CameraPose& pose, int samples) {
  for (std::size_t i = 0; i < sc.berries.size(); ++i) {
    const auto& b = sc.berries[i];
    if (b.center.x == berry.center.x && b.center.y == berry.center.y &&
        b.center.z == berry.center.z && b.radius == berry.radius)
      return visible_fraction(sc, i, pose, samples);
  }
  return visible_fraction_impl(sc, berry, -1, pose, samples);
}

namespace {

struct Material {
  double h, s, v;
};

Material berry_material(const PlantScene& sc, std::size_t i) {
  const Berry& b = sc.berries[i];
  const double j1 = jitter(sc.seed, "berry-hue", i);
  const double j2 = jitter(sc.seed, "berry-sat", i);
  if (b.ripeness == Ripeness::Ripe) {
    // Saturated red; hue stays in the ripe band even after the wrap.
    return {357.5 + 15.0 * (j1 - 0.5), 0.75 + 0.2 * j2, 0.9};
  }
  // White-green, low saturation, bright.
  return {95.0 + 40.0 * (j1 - 0.5), 0.2 + 0.25 * j2, 0.95};
}

Material leaf_material(const PlantScene& sc, std::size_t i) {
  const double j1 = jitter(sc.seed, "leaf-hue", i);
  const double j2 = jitter(sc.seed, "leaf-val", i);
  // Dark saturated green. Value stays below 0.5 so foliage never reads as an
  // unripe berry to the hue heuristics.
  return {115.0 + 30.0 * (j1 - 0.5), 0.8, 0.4 + 0.06 * (j2 - 0.5)};
}

constexpr Material kGround{25.0, 0.5, 0.4};
constexpr Material kBackdrop{30.0, 0.35, 0.55};
constexpr double kAmbient = 0.35;

}  // namespace

Frame render(const PlantScene& sc, const CameraPose& pose,
             const CameraIntrinsics& intr) {
  const CameraFrame fr = pose_to_world(pose);
  Frame out;
  out.width = intr.width;
  out.height = intr.height;
  out.pixels.assign(static_cast<std::size_t>(3) * intr.width * intr.height, 0);

  enum class HitKind { None, Berry, Leaf, Ground };
  for (int py = 0; py < intr.height; ++py) {
    for (int px = 0; px < intr.width; ++px) {
      const geom::Ray ray = fr.pixel_ray(px, py, intr);
      double t_best = std::numeric_limits<double>::infinity();
      HitKind kind = HitKind::None;
      std::size_t index = 0;
      for (std::size_t i = 0; i < sc.berries.size(); ++i) {
        const auto& b = sc.berries[i];
        if (auto t = geom::intersect_sphere(ray, b.center, b.radius);
            t && *t < t_best) {
          t_best = *t;
          kind = HitKind::Berry;
          index = i;
        }
      }
      for (std::size_t i = 0; i < sc.leaves.size(); ++i) {
        const auto& l = sc.leaves[i];
        if (auto t = geom::intersect_disk(ray, l.center, l.normal,
                                          l.semi_axes[0], l.semi_axes[1]);
            t && *t < t_best) {
          t_best = *t;
          kind = HitKind::Leaf;
          index = i;
        }
      }
      if (ray.dir.z < -1e-12) {
        const double t = -ray.origin.z / ray.dir.z;
        if (t > 1e-9 && t < t_best) {
          t_best = t;
          kind = HitKind::Ground;
        }
      }

      Material m = kBackdrop;
      double shade = 1.0;
      if (kind != HitKind::None) {
        const geom::Vec3 hit = ray.origin + t_best * ray.dir;
        geom::Vec3 n{0.0, 0.0, 1.0};
        if (kind == HitKind::Berry) {
          const auto& b = sc.berries[index];
          n = (hit - b.center) * (1.0 / b.radius);
          m = berry_material(sc, index);
        } else if (kind == HitKind::Leaf) {
          n = sc.leaves[index].normal;
          m = leaf_material(sc, index);
        } else {
          m = kGround;
        }
        // Headlight diffuse: light rides with the camera, surfaces are
        // two-sided. Scaling value preserves hue and saturation, so shading
        // never moves a surface out of its hue band.
        double cosv = geom::dot(n, -ray.dir);
        if (cosv < 0.0) cosv = -cosv;
        shade = kAmbient + (1.0 - kAmbient) * cosv;
      }
      const Rgb8 rgb = hsv_to_rgb(m.h, m.s, m.v * shade);
      std::uint8_t* p = out.at(px, py);
      p[0] = rgb.r;
      p[1] = rgb.g;
      p[2] = rgb.b;
    }
  }
  return out;
}

std::string scene_to_json(const PlantScene& sc) {
  nlohmann::json j;
  j["seed"] = sc.seed;
  j["berries"] = nlohmann::json::array();
  for (const auto& b : sc.berries) {
    j["berries"].push_back(
        {{"center", {b.center.x, b.center.y, b.center.z}},
         {"radius", b.radius},
         {"ripe", b.ripeness == Ripeness::Ripe}});
  }
  j["leaves"] = nlohmann::json::array();
  for (const auto& l : sc.leaves) {
    j["leaves"].push_back(
        {{"center", {l.center.x, l.center.y, l.center.z}},
         {"normal", {l.normal.x, l.normal.y, l.normal.z}},
         {"semi_axes", {l.semi_axes[0], l.semi_axes[1]}}});
  }
  return j.dump();
}

PlantScene scene_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("scene json: ") + e.what(),
                      static_cast<std::size_t>(e.byte));
  }
  try {
    PlantScene sc;
    sc.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jb : j.at("berries")) {
      Berry b;
      const auto& c = jb.at("center");
      b.center = {c.at(0), c.at(1), c.at(2)};
      b.radius = jb.at("radius");
      b.ripeness = jb.at("ripe").get<bool>() ? Ripeness::Ripe
                                             : Ripeness::Unripe;
      sc.berries.push_back(b);
    }
    for (const auto& jl : j.at("leaves")) {
      Leaf l;
      const auto& c = jl.at("center");
      l.center = {c.at(0), c.at(1), c.at(2)};
      const auto& n = jl.at("normal");
      l.normal = {n.at(0), n.at(1), n.at(2)};
      l.semi_axes = {jl.at("semi_axes").at(0), jl.at("semi_axes").at(1)};
      sc.leaves.push_back(l);
    }
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene json: ") + e.what());
  }
}

}  // namespace vpoc::scene
