#include "vpoc/env.hpp"

#include <algorithm>
#include <cmath>

#include "vpoc/errors.hpp"

namespace vpoc::env {

double wrap_angle(double theta) {
  const double two_pi = 2.0 * kPi;
  double w = std::fmod(theta, two_pi);
  if (w < 0.0) w += two_pi;
  return w;
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  double g = 0.0;
  for (std::size_t i = rewards.size(); i > 0; --i)
    g = rewards[i - 1] + gamma * g;
  return g;
}

void Workspace::validate() const {
  if (radius <= 0.0) throw ConfigError("workspace radius must be positive");
  if (!(phi_min > 0.0)) throw ConfigError("phi_min must exclude the zenith");
  if (!(phi_max < kPi / 2.0 + 1e-12))
    throw ConfigError("phi_max must stay at or above the ground plane");
  if (!(phi_min < phi_max)) throw ConfigError("phi_min must be below phi_max");
}

void EnvConfig::validate() const {
  workspace.validate();
  generator.validate();
  if (action_limit <= 0.0) throw ConfigError("action limit must be positive");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (!workspace.phi_in_bounds(spawn_phi))
    throw ConfigError("spawn phi outside the workspace");
  if (reward.confidence_threshold <= 0.0 ||
      reward.confidence_threshold > 1.0)
    throw ConfigError("confidence threshold must be in (0, 1]");
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.detector_kind == DetectorKind::Grid)
    throw ConfigError("grid detector mode needs trained grid parameters");
}

Environment::Environment(EnvConfig cfg, detector::GridParams grid_params)
    : cfg_(std::move(cfg)), grid_params_(std::move(grid_params)) {
  cfg_.validate();
  if (cfg_.detector_kind == DetectorKind::Grid && !grid_params_.trained)
    throw ConfigError("grid detector mode needs trained grid parameters");
}

std::vector<detector::Detection> Environment::detect() const {
  if (cfg_.detector_kind == DetectorKind::Oracle)
    return detector::oracle_detect(scene_, pose_, cfg_.intrinsics,
                                   cfg_.oracle);
  const scene::Frame frame = render(scene_, pose_, cfg_.intrinsics);
  return detector::grid_detect(frame, grid_params_, cfg_.grid);
}

Observation Environment::make_observation() const {
  Observation obs;
  const double span = cfg_.workspace.phi_max - cfg_.workspace.phi_min;
  obs.pose_features = {
      std::sin(pose_.theta), std::cos(pose_.theta),
      2.0 * (pose_.phi - cfg_.workspace.phi_min) / span - 1.0};

  std::vector<const detector::Detection*> ripe;
  for (const auto& d : detections_)
    if (d.cls == scene::Ripeness::Ripe) ripe.push_back(&d);
  std::stable_sort(ripe.begin(), ripe.end(),
                   [](const detector::Detection* a,
                      const detector::Detection* b) {
                     return a->confidence > b->confidence;
                   });

  const double w = cfg_.intrinsics.width;
  const double h = cfg_.intrinsics.height;
  obs.detection_features.assign(cfg_.detection_feature_dim(), 0.0);
  const std::size_t n =
      std::min(ripe.size(), static_cast<std::size_t>(cfg_.top_k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = ripe[i]->box;
    const double cx = 0.5 * (b.x_min + b.x_max);
    const double cy = 0.5 * (b.y_min + b.y_max);
    double* f = obs.detection_features.data() + 5 * i;
    f[0] = (cx - 0.5 * w) / (0.5 * w);
    f[1] = (cy - 0.5 * h) / (0.5 * h);
    f[2] = b.width() / w;
    f[3] = b.height() / h;
    f[4] = ripe[i]->confidence;
  }

  if (cfg_.obs_mode == ObsMode::Pixels)
    obs.frame = render(scene_, pose_, cfg_.intrinsics);
  return obs;
}

const Observation& Environment::reset(std::uint64_t plant_seed) {
  scene_ = scene::generate_plant(plant_seed, cfg_.generator);
  has_scene_ = true;
  pose_ = {cfg_.spawn_theta, cfg_.spawn_phi, cfg_.workspace.radius};
  t_ = 0;
  done_ = false;
  detections_ = detect();
  obs_ = make_observation();
  return obs_;
}

Transition Environment::step(const Action& a) {
  if (!has_scene_) throw LifecycleError("step before reset");
  if (done_) throw LifecycleError("step after the episode ended");

  Transition tr;
  tr.obs = obs_;
  const double lim = cfg_.action_limit;
  tr.action = {std::clamp(a.d_theta, -lim, lim),
               std::clamp(a.d_phi, -lim, lim)};

  pose_.theta = wrap_angle(pose_.theta + tr.action.d_theta);
  const double phi_raw = pose_.phi + tr.action.d_phi;
  const bool invalid = !cfg_.workspace.phi_in_bounds(phi_raw);
  pose_.phi =
      std::clamp(phi_raw, cfg_.workspace.phi_min, cfg_.workspace.phi_max);

  detections_ = detect();
  tr.p_max = 0.0;
  for (const auto& d : detections_)
    if (d.cls == scene::Ripeness::Ripe)
      tr.p_max = std::max(tr.p_max, d.confidence);

  if (invalid)
    tr.reward = cfg_.reward.invalid_penalty;
  else if (tr.p_max >= cfg_.reward.confidence_threshold)
    tr.reward = cfg_.reward.detect_bonus;
  else
    tr.reward = cfg_.reward.step_penalty;

  ++t_;
  tr.timeout = t_ >= cfg_.horizon;
  tr.done = tr.timeout;
  done_ = tr.done;

  obs_ = make_observation();
  tr.next_obs = obs_;
  return tr;
}

}  // namespace vpoc::env
