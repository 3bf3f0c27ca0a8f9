#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vpoc/box.hpp"
#include "vpoc/dataset.hpp"
#include "vpoc/nets.hpp"
#include "vpoc/scene.hpp"

namespace vpoc::detector {

struct Detection {
  BoundingBox box;
  scene::Ripeness cls = scene::Ripeness::Unripe;
  double confidence = 0.0;
};

// Intersection-over-union of half-open integer boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// Ground-truth-backed detector. Emits one detection per sufficiently visible
// berry; confidence is a logistic blend of apparent size and visible
// fraction plus seeded Gaussian noise, so repeated calls at the same
// (scene, pose) return identical output.
struct OracleConfig {
  double v_min = 0.25;        // minimum visible fraction
  double alpha = 0.8;         // weight of log apparent diameter (px)
  double beta = 2.0;          // weight of visible fraction
  double gamma0 = -2.40;      // offset pinned by calibrate_gamma0 at the
                              // standard collection scale (seed 1)
  double noise_scale = 0.05;  // confidence noise stddev
  int visibility_samples = 64;
};

// Frame-statistics detector: per-cell logistic score over color features,
// positive cells merged 4-connected into boxes.
struct GridConfig {
  int grid_size = 8;
  double cell_threshold = 0.5;
};

// Trained per-class weights for the grid detector. Feature order per cell:
// mean R, G, B, 8-bin hue histogram, in-class-hue-range fraction.
inline constexpr int kGridFeatureDim = 12;

struct GridParams {
  int grid_size = 8;
  dataset::OcclusionConfig hue;  // hue bands used for the in-range feature
  // [class][feature]; class 0 = ripe, 1 = unripe.
  std::vector<float> weights;  // 2 * kGridFeatureDim
  std::vector<float> bias;     // 2
  bool trained = false;
};

// Per-cell feature extraction, exposed for training and tests.
std::vector<double> grid_cell_features(const scene::Frame& frame, int grid,
                                       int cx, int cy,
                                       const dataset::HueRange& range);

std::vector<Detection> grid_detect(const scene::Frame& frame,
                                   const GridParams& params,
                                   const GridConfig& cfg);

struct GridTrainConfig {
  int epochs = 40;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

// Trains both per-class cell classifiers with the shared Adam machinery.
// Cell labels come from annotation box centers. Throws ConfigError on an
// empty training set.
GridParams train_grid(const std::vector<dataset::AnnotatedFrame>& train,
                      const dataset::OcclusionConfig& hue,
                      const GridTrainConfig& cfg, int grid_size = 8);

void save_grid(const std::filesystem::path& path, const GridParams& params);
GridParams load_grid(const std::filesystem::path& path);

// Oracle evaluation against a live scene.
std::vector<Detection> oracle_detect(const scene::PlantScene& sc,
                                     const scene::CameraPose& pose,
                                     const scene::CameraIntrinsics& intr,
                                     const OracleConfig& cfg);

// Precomputed per-berry summary; confidence for any gamma0 follows without
// re-tracing visibility, which keeps the calibration sweep cheap.
struct OracleCandidate {
  BoundingBox box;
  scene::Ripeness cls;
  double vis = 0.0;      // visible fraction
  double diam_px = 0.0;  // apparent diameter before clipping
  double noise_z = 0.0;  // seeded standard normal draw
};
std::vector<OracleCandidate> oracle_candidates(
    const scene::PlantScene& sc, const scene::CameraPose& pose,
    const scene::CameraIntrinsics& intr, const OracleConfig& cfg);
double oracle_confidence(const OracleCandidate& c, const OracleConfig& cfg);

// Precision-recall evaluation: detections per frame are matched to same-class
// ground truth greedily in descending confidence order at each IOU
// threshold. Precision is 1 when there are no detections; recall is 1 when
// there is no ground truth.
struct FrameEval {
  std::vector<Detection> detections;
  std::vector<dataset::Annotation> truth;
};

struct PrPoint {
  double iou_t = 0.0, conf_t = 0.0;
  double precision = 0.0, recall = 0.0;
  long long tp = 0, fp = 0, fn = 0;
};

std::vector<double> default_iou_grid();   // 0.1 .. 0.9 step 0.1
std::vector<double> default_conf_grid();  // 0.01 .. 1.00 step 0.01

std::vector<PrPoint> pr_curve(const std::vector<FrameEval>& frames,
                              const std::vector<double>& iou_thresholds,
                              const std::vector<double>& conf_thresholds);

using DetectFn =
    std::function<std::vector<Detection>(const dataset::AnnotatedFrame&)>;

// Runs the detector once per frame, then sweeps the threshold grids.
std::vector<PrPoint> pr_curve(const std::vector<dataset::AnnotatedFrame>& set,
                              const DetectFn& fn,
                              const std::vector<double>& iou_thresholds,
                              const std::vector<double>& conf_thresholds);

// Oracle detector bound to regenerated scenes (for stored datasets).
DetectFn make_oracle_fn(const OracleConfig& cfg,
                        const scene::GeneratorConfig& gen,
                        const scene::CameraIntrinsics& intr);
DetectFn make_grid_fn(const GridParams& params, const GridConfig& cfg);

// Finds the PrPoint at (iou_t, conf_t); exact grid values expected.
const PrPoint& pr_at(const std::vector<PrPoint>& rows, double iou_t,
                     double conf_t);

// One-dimensional sweep of gamma0 targeting `target_precision` at the
// (conf 0.6, IOU 0.5) operating point over the given frames. Returns the
// chosen gamma0 (the default in OracleConfig is pinned from this procedure).
struct CalibrationResult {
  double gamma0 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};
CalibrationResult calibrate_gamma0(
    const std::vector<dataset::AnnotatedFrame>& frames,
    const scene::GeneratorConfig& gen, const scene::CameraIntrinsics& intr,
    OracleConfig cfg, double target_precision = 0.9);

void write_pr_csv(const std::filesystem::path& path,
                  const std::vector<PrPoint>& rows);
std::string pr_curve_svg(const std::vector<PrPoint>& rows);

}  // namespace vpoc::detector
