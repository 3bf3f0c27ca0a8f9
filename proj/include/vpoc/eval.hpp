#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vpoc/detector.hpp"
#include "vpoc/env.hpp"
#include "vpoc/policies.hpp"

namespace vpoc::eval {

// One executed action and the pose/reward it produced.
struct StepRecord {
  scene::CameraPose pose;  // post-move pose the reward was computed at
  env::Action action;
  double reward = 0.0;
  double p_max = 0.0;
};

struct EpisodeRecord {
  std::uint64_t plant_seed = 0;
  scene::CameraPose spawn;
  std::vector<StepRecord> steps;
  double return_discounted = 0.0;
  double return_undiscounted = 0.0;
  std::optional<int> first_reward_step;  // 0-based, reward > 0
};

struct FixationConfig {
  int min_steps = 50;   // labels only for episodes strictly longer
  int window = 20;      // trailing steps examined
  double eps_displacement = 0.02;  // rad, mean consecutive great-circle step
  double reward_majority = 0.5;

  void validate() const;  // throws ConfigError
};

enum class FixationLabel {
  HighReturnFixation,
  LowReturnFixation,
  NoFixation
};

// nullopt for episodes too short to judge. Displacements are great-circle
// angles between consecutive poses, so the label is invariant to rigid
// rotations of the trajectory in theta.
std::optional<FixationLabel> classify_fixation(const EpisodeRecord& record,
                                               const FixationConfig& cfg = {});

std::string fixation_name(FixationLabel label);

struct Summary {
  std::string policy;
  int n_episodes = 0;
  double mean_return = 0.0;  // discounted, the headline metric
  double sd_return = 0.0;    // sample standard deviation
  double mean_return_undiscounted = 0.0;
  double mean_steps_to_reward = 0.0;  // rewarded episodes only; 0 if none
  long long n_rewarded = 0;
  double reward_rate = 0.0;  // positive-reward steps / total steps
};

struct EvalConfig {
  int episodes = 100;
  std::uint64_t seed = 1;  // training base seed
  // Held-out plants: evaluation plant seeds sit a fixed offset above the
  // training range.
  std::uint64_t seed_offset = 1000000;
  double gamma = 0.99;
  int workers = 1;
  FixationConfig fixation;

  void validate() const;  // throws ConfigError
};

std::uint64_t eval_plant_seed(const EvalConfig& cfg, int episode);

using PolicyFactory =
    std::function<policies::PolicyRunner(std::uint64_t policy_seed)>;

// Runs `episodes` rollouts on held-out plants. Each episode gets a fresh
// policy stream, so worker striping cannot change any episode's outcome;
// records come back in episode order. `grid` may be null for oracle mode.
std::vector<EpisodeRecord> evaluate(const env::EnvConfig& env_cfg,
                                    const detector::GridParams* grid,
                                    const PolicyFactory& make_policy,
                                    const EvalConfig& cfg);

Summary summarize(const std::string& policy,
                  const std::vector<EpisodeRecord>& records);

void write_records_jsonl(const std::filesystem::path& path,
                         const std::string& policy,
                         const std::vector<EpisodeRecord>& records,
                         const FixationConfig& fixation);

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<Summary>& rows);
std::vector<Summary> read_summary_csv(const std::filesystem::path& path);

// Top-down orthographic view: workspace rim, plant footprint, berry layout,
// the pose polyline, yellow circles at negative-reward steps and blue stars
// at detection steps.
std::string plot_trajectory(const EpisodeRecord& record,
                            const scene::PlantScene& sc,
                            const env::Workspace& workspace,
                            double plant_radius);

// Two bar panels (mean discounted return, mean steps to first reward) with
// standard-error whiskers, bars in the canonical policy order.
std::string plot_summary(std::vector<Summary> rows);

}  // namespace vpoc::eval
