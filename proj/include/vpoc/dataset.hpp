#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vpoc/box.hpp"
#include "vpoc/scene.hpp"

namespace vpoc::dataset {

// Closed hue interval in degrees; wraps through 0 when hue_lo > hue_hi
// (e.g. 345..15 covers the red band across the origin). A pixel is in range
// when its hue lies in the interval and its saturation and value clear the
// floors.
struct HueRange {
  double hue_lo = 0.0;
  double hue_hi = 360.0;
  double min_sat = 0.0;
  double min_val = 0.0;

  bool contains(double h, double s, double v) const;
};

struct OcclusionConfig {
  HueRange ripe{345.0, 15.0, 0.4, 0.0};
  HueRange unripe{60.0, 130.0, 0.0, 0.5};
  double min_fraction = 0.15;  // of the box area
  int min_pixels = 4;

  const HueRange& range_for(scene::Ripeness r) const {
    return r == scene::Ripeness::Ripe ? ripe : unripe;
  }
};

struct Annotation {
  BoundingBox box;
  scene::Ripeness cls = scene::Ripeness::Unripe;
};

struct AnnotatedFrame {
  std::uint64_t plant_seed = 0;
  int plant_index = 0;
  int view_index = 0;
  scene::CameraPose pose;
  scene::Frame frame;
  std::vector<Annotation> annotations;
};

// Number of pixels inside `box` whose color falls in the class hue range.
long long in_range_pixel_count(const scene::Frame& frame,
                               const BoundingBox& box, const HueRange& range);

// Keep-the-box test from the collection pipeline: enough class-colored pixels
// must actually show inside the box. Throws GeometryError on an empty box.
bool occlusion_check(const scene::Frame& frame, const BoundingBox& box,
                     scene::Ripeness cls, const OcclusionConfig& cfg);

struct CollectConfig {
  int num_plants = 100;
  int num_views = 20;
  std::uint64_t seed = 0;
  scene::GeneratorConfig generator;
  scene::CameraIntrinsics intrinsics;
  double hemisphere_radius = 0.5;
  // View poses are sampled uniformly over this (theta, phi) rectangle.
  double phi_min = 10.0 * 3.14159265358979323846 / 180.0;
  double phi_max = 80.0 * 3.14159265358979323846 / 180.0;
  OcclusionConfig occlusion;
  int workers = 1;

  void validate() const;
};

// Renders num_plants x num_views frames and annotates every berry whose
// projected box survives the occlusion check. Plants are independent, so the
// work fans out across `workers` threads; results are merged in plant order
// and are byte-identical for a fixed (seed, config) regardless of workers.
std::vector<AnnotatedFrame> collect(const CollectConfig& cfg);

// Plant seed for plant `index` of a collection rooted at `seed`.
std::uint64_t plant_seed_for(std::uint64_t seed, int index);

// Splits by plant: every frame of a plant lands on one side. The train side
// receives round(train_fraction * num_plants) plants, clamped so neither side
// is empty. Throws ConfigError when the set holds fewer than two plants.
std::pair<std::vector<AnnotatedFrame>, std::vector<AnnotatedFrame>> split(
    const std::vector<AnnotatedFrame>& frames, double train_fraction,
    std::uint64_t seed);

// Binary PPM (P6) image I/O.
void write_ppm(const std::filesystem::path& path, const scene::Frame& frame);
scene::Frame read_ppm(const std::filesystem::path& path);

// Dataset directory layout: frames/<plant>_<view>.ppm plus annotations.jsonl
// with one record per frame (pose, plant seed, frame path, boxes).
void save_dataset(const std::filesystem::path& dir,
                  const std::vector<AnnotatedFrame>& frames);
std::vector<AnnotatedFrame> load_dataset(const std::filesystem::path& dir);

}  // namespace vpoc::dataset
