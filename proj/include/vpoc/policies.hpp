#pragma once

#include <functional>
#include <string>

#include "vpoc/env.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::policies {

// Shared knobs for the scripted baselines. `step` is the downward-search
// increment, `gain` with (k_theta, k_phi) scales the proportional servo.
struct BaselineConfig {
  double phi_star = 60.0 * kPi / 180.0;
  double detect_threshold = 0.5;
  double gain = 0.5;
  double step = env::kDefaultActionLimit;
  double k_theta = env::kDefaultActionLimit;
  double k_phi = env::kDefaultActionLimit;
  double action_limit = env::kDefaultActionLimit;

  void validate(const env::Workspace& ws) const;  // throws ConfigError
};

// Uniform action in both components.
env::Action pi1(rng::Stream& rs, const BaselineConfig& cfg);

// Uniform action, but the elevation component is negated whenever applying it
// would leave the workspace. Never triggers the invalid-move penalty as long
// as the elevation span exceeds the action limit.
env::Action pi2(const scene::CameraPose& pose, rng::Stream& rs,
                const BaselineConfig& cfg, const env::Workspace& ws);

// Move straight down the hemisphere until phi_star, then behave as pi2.
env::Action pi3(const scene::CameraPose& pose, rng::Stream& rs,
                const BaselineConfig& cfg, const env::Workspace& ws);

// Hold still while a ripe detection at or above the threshold is visible
// (threshold inclusive), otherwise search as pi3.
env::Action pi4(const scene::CameraPose& pose, const env::Observation& obs,
                rng::Stream& rs, const BaselineConfig& cfg,
                const env::Workspace& ws);

// Proportional servo toward the most confident ripe box: image-right maps to
// increasing theta, image-down to increasing phi, with the elevation step
// saturated at the workspace boundary. Falls back to pi3 when no detection
// clears the threshold.
env::Action pi5(const scene::CameraPose& pose, const env::Observation& obs,
                rng::Stream& rs, const BaselineConfig& cfg,
                const env::Workspace& ws);

using ActorFn = std::function<env::Action(const env::Observation&)>;

// Scripted descent below phi_star, learned actor above it, with pi2-style
// boundary reflection applied to the actor's elevation component.
env::Action hybrid(const scene::CameraPose& pose, const env::Observation& obs,
                   const ActorFn& actor, rng::Stream& rs,
                   const BaselineConfig& cfg, const env::Workspace& ws);

enum class PolicyKind {
  Random,
  RandomBa,
  Downward,
  Frozen,
  Proportional,
  Ddpg,
  Hybrid
};

PolicyKind parse_policy_kind(const std::string& name);  // throws ConfigError
std::string policy_name(PolicyKind kind);
bool policy_needs_actor(PolicyKind kind);

// One policy behind a common call signature for rollouts. The rng stream is
// owned by the runner so replays with the same seed are identical.
class PolicyRunner {
 public:
  PolicyRunner(PolicyKind kind, BaselineConfig cfg, env::Workspace ws,
               std::uint64_t seed, ActorFn actor = nullptr);

  env::Action operator()(const scene::CameraPose& pose,
                         const env::Observation& obs);
  PolicyKind kind() const { return kind_; }

 private:
  PolicyKind kind_;
  BaselineConfig cfg_;
  env::Workspace ws_;
  rng::Stream rs_;
  ActorFn actor_;
};

}  // namespace vpoc::policies
