#pragma once

#include <cstdint>
#include <filesystem>

#include "vpoc/agent.hpp"
#include "vpoc/env.hpp"

namespace vpoc::runner {

enum class TrainMode { Sequential, Parallel };

struct TrainConfig {
  long long episodes = 1000;
  TrainMode mode = TrainMode::Sequential;
  long long checkpoint_every = 100;  // in episodes; <= 0 disables cadence
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  // Continue from the agent's stored episode counter and append to the log.
  bool resume = false;

  void validate() const;  // throws ConfigError
};

struct TrainResult {
  long long episodes_run = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  double wall_seconds = 0.0;
};

// Plant seed for a training episode, stable across resumes.
std::uint64_t episode_plant_seed(std::uint64_t seed, long long episode);

// Sequential mode interleaves one update per environment step after warm-up
// and is bitwise reproducible from (seed, config). Parallel mode runs one
// collection thread against one update thread sharing the replay buffer;
// the actor steps a published parameter snapshot, so results are only
// statistically reproducible.
//
// Writes train_log.jsonl (one row per episode: episode, steps, returns,
// mean critic loss), train_summary.json (wall clock and counters), and
// checkpoints at the configured cadence plus checkpoint_final.ckpt.
TrainResult run_training(env::Environment& environment, agent::Agent& agent,
                         const TrainConfig& cfg);

}  // namespace vpoc::runner
