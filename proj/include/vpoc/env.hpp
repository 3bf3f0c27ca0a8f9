#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vpoc/dataset.hpp"
#include "vpoc/detector.hpp"
#include "vpoc/scene.hpp"

namespace vpoc::env {

// Camera workspace: a hemisphere shell of fixed radius around the plant,
// with elevation limited away from both the pole and the ground plane.
struct Workspace {
  double radius = 0.5;
  double phi_min = 10.0 * kPi / 180.0;
  double phi_max = 80.0 * kPi / 180.0;

  void validate() const;
  bool phi_in_bounds(double phi) const {
    return phi >= phi_min && phi <= phi_max;
  }
};

inline constexpr double kDefaultActionLimit = 0.15;

// Angular step (d_theta, d_phi) in radians.
struct Action {
  double d_theta = 0.0;
  double d_phi = 0.0;
};

enum class ObsMode { Features, Pixels };
enum class DetectorKind { Oracle, Grid };

struct Observation {
  // (sin theta, cos theta, phi scaled to [-1, 1]).
  std::array<double, 3> pose_features{};
  // Top-k ripe detections by confidence, 5 values each:
  // box center (u, v) in [-1, 1] with origin at the image center,
  // box width and height as fractions of the frame, confidence.
  // Zero padded when fewer than k detections are visible.
  std::vector<double> detection_features;
  // Present only in pixel mode.
  std::optional<scene::Frame> frame;
};

struct RewardConfig {
  double detect_bonus = 1.0;
  double invalid_penalty = -1.0;
  double step_penalty = -0.1;
  double confidence_threshold = 0.6;
};

struct EnvConfig {
  Workspace workspace;
  scene::GeneratorConfig generator;
  scene::CameraIntrinsics intrinsics;
  detector::OracleConfig oracle;
  detector::GridConfig grid;
  RewardConfig reward;
  ObsMode obs_mode = ObsMode::Features;
  DetectorKind detector_kind = DetectorKind::Oracle;
  double action_limit = kDefaultActionLimit;
  int horizon = 100;
  int top_k = 3;
  double spawn_theta = 0.0;
  double spawn_phi = 30.0 * kPi / 180.0;

  void validate() const;
  std::size_t detection_feature_dim() const {
    return static_cast<std::size_t>(top_k) * 5;
  }
};

struct Transition {
  Observation obs;
  Action action;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
  bool timeout = false;
  // Highest ripe-class confidence at the post-move pose (0 if none seen).
  double p_max = 0.0;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg);
  Environment(EnvConfig cfg, detector::GridParams grid_params);

  const Observation& reset(std::uint64_t plant_seed);
  Transition step(const Action& a);

  bool done() const { return done_; }
  int steps() const { return t_; }
  const scene::CameraPose& pose() const { return pose_; }
  const scene::PlantScene& scene() const { return scene_; }
  const std::vector<detector::Detection>& last_detections() const {
    return detections_;
  }
  const Observation& observation() const { return obs_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  std::vector<detector::Detection> detect() const;
  Observation make_observation() const;

  EnvConfig cfg_;
  detector::GridParams grid_params_;
  scene::PlantScene scene_;
  scene::CameraPose pose_;
  std::vector<detector::Detection> detections_;
  Observation obs_;
  int t_ = 0;
  bool done_ = true;
  bool has_scene_ = false;
};

double wrap_angle(double theta);
double discounted_return(const std::vector<double>& rewards, double gamma);

}  // namespace vpoc::env
