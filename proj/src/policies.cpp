#include "vpoc/policies.hpp"

#include <algorithm>
#include <cmath>

#include "vpoc/errors.hpp"

namespace vpoc::policies {

void BaselineConfig::validate(const env::Workspace& ws) const {
  if (!(phi_star > ws.phi_min && phi_star < ws.phi_max))
    throw ConfigError("phi_star must lie strictly inside the elevation range");
  if (!(detect_threshold > 0.0 && detect_threshold < 1.0))
    throw ConfigError("detector threshold must be in (0, 1)");
  if (step <= 0.0 || step > action_limit)
    throw ConfigError("step magnitude must be in (0, action_limit]");
  // Descent from just below phi_star must not overshoot the boundary, and
  // reflection must be able to recover from either edge.
  if (phi_star + step > ws.phi_max)
    throw ConfigError("phi_star + step exceeds phi_max");
  if (step >= ws.phi_max - ws.phi_min)
    throw ConfigError("step must be smaller than the elevation span");
}

env::Action pi1(rng::Stream& rs, const BaselineConfig& cfg) {
  const double lim = cfg.action_limit;
  return {rs.uniform(-lim, lim), rs.uniform(-lim, lim)};
}

namespace {

double reflect_phi(double d_phi, const scene::CameraPose& pose,
                   const env::Workspace& ws) {
  const double next = pose.phi + d_phi;
  if (next < ws.phi_min || next > ws.phi_max) return -d_phi;
  return d_phi;
}

// Most confident ripe slot of the observation, or nullptr below threshold.
// Slots are (u, v, w, h, conf) sorted by confidence, zero padded.
const double* best_ripe_slot(const env::Observation& obs, double threshold) {
  if (obs.detection_features.size() < 5) return nullptr;
  const double* f = obs.detection_features.data();
  return f[4] >= threshold ? f : nullptr;
}

}  // namespace

env::Action pi2(const scene::CameraPose& pose, rng::Stream& rs,
                const BaselineConfig& cfg, const env::Workspace& ws) {
  env::Action a = pi1(rs, cfg);
  a.d_phi = reflect_phi(a.d_phi, pose, ws);
  return a;
}

env::Action pi3(const scene::CameraPose& pose, rng::Stream& rs,
                const BaselineConfig& cfg, const env::Workspace& ws) {
  if (pose.phi < cfg.phi_star) return {0.0, cfg.step};
  return pi2(pose, rs, cfg, ws);
}

env::Action pi4(const scene::CameraPose& pose, const env::Observation& obs,
                rng::Stream& rs, const BaselineConfig& cfg,
                const env::Workspace& ws) {
  if (best_ripe_slot(obs, cfg.detect_threshold)) return {0.0, 0.0};
  return pi3(pose, rs, cfg, ws);
}

env::Action pi5(const scene::CameraPose& pose, const env::Observation& obs,
                rng::Stream& rs, const BaselineConfig& cfg,
                const env::Workspace& ws) {
  const double* slot = best_ripe_slot(obs, cfg.detect_threshold);
  if (!slot) return pi3(pose, rs, cfg, ws);
  const double lim = cfg.action_limit;
  env::Action a{std::clamp(cfg.gain * slot[0] * cfg.k_theta, -lim, lim),
                std::clamp(cfg.gain * slot[1] * cfg.k_phi, -lim, lim)};
  // The servo saturates at the elevation boundary instead of stepping out.
  a.d_phi = std::clamp(a.d_phi, ws.phi_min - pose.phi, ws.phi_max - pose.phi);
  return a;
}

env::Action hybrid(const scene::CameraPose& pose, const env::Observation& obs,
                   const ActorFn& actor, rng::Stream& rs,
                   const BaselineConfig& cfg, const env::Workspace& ws) {
  if (!actor) throw LifecycleError("hybrid policy has no loaded actor");
  if (pose.phi < cfg.phi_star) return pi3(pose, rs, cfg, ws);
  env::Action a = actor(obs);
  a.d_phi = reflect_phi(a.d_phi, pose, ws);
  return a;
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "random") return PolicyKind::Random;
  if (name == "random-ba") return PolicyKind::RandomBa;
  if (name == "downward") return PolicyKind::Downward;
  if (name == "frozen") return PolicyKind::Frozen;
  if (name == "proportional") return PolicyKind::Proportional;
  if (name == "ddpg") return PolicyKind::Ddpg;
  if (name == "hybrid") return PolicyKind::Hybrid;
  throw ConfigError("unknown policy: " + name);
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Random: return "random";
    case PolicyKind::RandomBa: return "random-ba";
    case PolicyKind::Downward: return "downward";
    case PolicyKind::Frozen: return "frozen";
    case PolicyKind::Proportional: return "proportional";
    case PolicyKind::Ddpg: return "ddpg";
    case PolicyKind::Hybrid: return "hybrid";
  }
  throw ConfigError("unknown policy kind");
}

bool policy_needs_actor(PolicyKind kind) {
  return kind == PolicyKind::Ddpg || kind == PolicyKind::Hybrid;
}

PolicyRunner::PolicyRunner(PolicyKind kind, BaselineConfig cfg,
                           env::Workspace ws, std::uint64_t seed,
                           ActorFn actor)
    : kind_(kind),
      cfg_(cfg),
      ws_(ws),
      rs_(seed),
      actor_(std::move(actor)) {
  cfg_.validate(ws_);
  if (policy_needs_actor(kind_) && !actor_)
    throw LifecycleError(policy_name(kind_) + " policy needs a loaded actor");
}

env::Action PolicyRunner::operator()(const scene::CameraPose& pose,
                                     const env::Observation& obs) {
  switch (kind_) {
    case PolicyKind::Random: return pi1(rs_, cfg_);
    case PolicyKind::RandomBa: return pi2(pose, rs_, cfg_, ws_);
    case PolicyKind::Downward: return pi3(pose, rs_, cfg_, ws_);
    case PolicyKind::Frozen: return pi4(pose, obs, rs_, cfg_, ws_);
    case PolicyKind::Proportional: return pi5(pose, obs, rs_, cfg_, ws_);
    case PolicyKind::Ddpg: return actor_(obs);
    case PolicyKind::Hybrid: return hybrid(pose, obs, actor_, rs_, cfg_, ws_);
  }
  throw LifecycleError("unreachable policy kind");
}

}  // namespace vpoc::policies
