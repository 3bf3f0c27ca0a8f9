#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vpoc/box.hpp"
#include "vpoc/geom.hpp"

namespace vpoc::scene {

enum class Ripeness { Ripe, Unripe };

// Opaque sphere. Positions are meters in the world frame: plant base at the
// origin, z up.
struct Berry {
  geom::Vec3 center;
  double radius = 0.0;
  Ripeness ripeness = Ripeness::Unripe;
};

// Opaque flat elliptical disk. `normal` is unit length; the in-plane axes are
// derived from it deterministically.
struct Leaf {
  geom::Vec3 center;
  geom::Vec3 normal;
  std::array<double, 2> semi_axes{};
};

struct PlantScene {
  std::uint64_t seed = 0;
  std::vector<Berry> berries;
  std::vector<Leaf> leaves;
};

// Camera position on the upper hemisphere of radius `radius` centered on the
// plant: theta is azimuth (wraps mod 2*pi), phi is the polar angle from
// zenith. phi = 0 puts the camera at the zenith where the roll-free "up"
// direction is undefined; pose_to_world rejects it.
struct CameraPose {
  double theta = 0.0;
  double phi = 0.0;
  double radius = 0.5;

  geom::Vec3 position() const;
};

struct CameraIntrinsics {
  int width = 64;
  int height = 64;
  double fov = 1.5707963267948966;  // horizontal, radians

  // Pinhole focal length in pixels: width / (2 tan(fov / 2)).
  double focal_px() const;
};

// Rigid camera frame. Axes follow the image convention: x right, y down,
// z forward (toward the plant).
struct CameraFrame {
  geom::Vec3 origin;
  geom::Vec3 right;
  geom::Vec3 down;
  geom::Vec3 forward;

  geom::Vec3 world_to_camera(const geom::Vec3& w) const;
  // Ray through the center of pixel (px, py).
  geom::Ray pixel_ray(int px, int py, const CameraIntrinsics& intr) const;
};

// RGB8 image, row-major from the top-left pixel.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  std::uint8_t* at(int x, int y) {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

struct GeneratorConfig {
  int berry_count_min = 3;
  int berry_count_max = 10;
  double berry_radius_min = 0.008;
  double berry_radius_max = 0.02;
  double ripe_prob = 0.4;
  // Canopy density sits where typical viewpoints are occlusion-blocked but
  // good ones exist: a random policy scores near zero while a servo that
  // finds clear lines of sight scores an order of magnitude higher.
  int leaf_count_min = 14;
  int leaf_count_max = 22;
  double leaf_semi_axis_min = 0.04;
  double leaf_semi_axis_max = 0.08;
  double plant_radius = 0.15;
  double plant_height = 0.12;

  void validate() const;  // throws ConfigError
};

// Deterministic procedural plant: berry and leaf sets are a pure function of
// (seed, config). The generated layout always contains at least one leaf
// shadowing a berry from above, so every plant poses an occlusion problem.
PlantScene generate_plant(std::uint64_t seed, const GeneratorConfig& cfg = {});

// The occlusion guarantee the generator enforces (when it has any leaves):
// some leaf sits at or above some berry with horizontally overlapping reach.
bool any_leaf_above_berry(const PlantScene& sc);

// Camera placement looking at the origin with a roll-free up vector (world z
// projected onto the image plane). Throws GeometryError at phi = 0 and for
// radius <= 0.
CameraFrame pose_to_world(const CameraPose& pose);

// Continuous pixel-coordinate extent of a projected sphere silhouette, before
// rasterization. Used by the pixel box below and by apparent-size features.
struct SilhouetteExtent {
  double u_min, u_max, v_min, v_max;
};
std::optional<SilhouetteExtent> silhouette_extent(
    const Berry& berry, const CameraPose& pose, const CameraIntrinsics& intr);

// Tight pixel box around the silhouette: exactly the pixels whose center rays
// can hit the sphere, clipped to the frame. nullopt when the berry is behind
// the camera or projects fully outside the frame. Throws GeometryError if the
// camera is inside the berry.
std::optional<BoundingBox> project_sphere(const Berry& berry,
                                          const CameraPose& pose,
                                          const CameraIntrinsics& intr);

// Fraction of deterministic sample points on the camera-facing half of the
// berry surface whose segment to the camera is not blocked by other berries
// or leaves. samples >= 1; the point set is a spherical Fibonacci lattice, so
// the estimate is reproducible and low-discrepancy.
double visible_fraction(const PlantScene& sc, std::size_t berry_index,
                        const CameraPose& pose, int samples = 64);

// Same, identifying the berry by value; a berry not present in the scene is
// treated as external and occluded by every scene berry.
double visible_fraction(const Berry& berry, const PlantScene& sc,
                        const CameraPose& pose, int samples = 64);

// Per-pixel ray-cast render: berries (red ripe / green-white unripe), leaves
// (dark green), ground and backdrop (brown), headlight diffuse shading.
// Bitwise deterministic in (scene, pose, intrinsics).
Frame render(const PlantScene& sc, const CameraPose& pose,
             const CameraIntrinsics& intr);

// JSON round-trip for scenes (schema kept stable for stored datasets).
std::string scene_to_json(const PlantScene& sc);
PlantScene scene_from_json(const std::string& text);

}  // namespace vpoc::scene
