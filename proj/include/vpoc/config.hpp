#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vpoc/agent.hpp"
#include "vpoc/dataset.hpp"
#include "vpoc/detector.hpp"
#include "vpoc/env.hpp"
#include "vpoc/eval.hpp"
#include "vpoc/policies.hpp"
#include "vpoc/runner.hpp"

namespace vpoc::config {

// Strictly parsed TOML subset: [section] and [section.sub] headers, bare
// keys, quoted strings, integers, floats, booleans, single-line arrays, and
// '#' comments. Anything else is rejected rather than guessed at.
struct Value {
  enum class Kind { String, Int, Float, Bool, Array };
  Kind kind = Kind::String;
  std::string s;
  long long i = 0;
  double f = 0.0;
  bool b = false;
  std::vector<Value> array;
};

// Flat map keyed by "section.key" (top-level keys have no dot).
using Table = std::map<std::string, Value>;

Table parse_toml(const std::string& text);             // throws FormatError
Table load_toml_file(const std::filesystem::path& p);  // throws StorageError
// "section.key=value"; the value is parsed with the same literal rules.
void apply_override(Table& table, const std::string& spec);

// Every tunable in one place. Derived module configs are assembled by the
// factory functions below so each subsystem still sees only its own struct.
struct RunConfig {
  long long seed = 1;
  std::string out_dir;  // empty: $VPOC_OUT, then "runs"

  scene::GeneratorConfig generator;
  scene::CameraIntrinsics camera;

  int dataset_num_plants = 100;
  int dataset_num_views = 20;
  double dataset_train_fraction = 0.8;
  int dataset_workers = 1;
  dataset::OcclusionConfig occlusion;

  env::DetectorKind detector_kind = env::DetectorKind::Oracle;
  detector::OracleConfig oracle;
  detector::GridConfig grid;
  int grid_train_epochs = 40;
  double grid_train_lr = 0.05;

  env::ObsMode obs_mode = env::ObsMode::Features;
  env::Workspace workspace;
  env::RewardConfig reward;
  double action_limit = env::kDefaultActionLimit;
  int horizon = 100;
  int top_k = 3;
  double spawn_theta = 0.0;
  double spawn_phi = 30.0 * kPi / 180.0;

  // Angle settings are user-facing in degrees; the authoritative degree
  // values are kept so the resolved file re-parses to identical radians.
  double camera_fov_deg = 90.0;
  double phi_min_deg = 10.0;
  double phi_max_deg = 80.0;
  double spawn_theta_deg = 0.0;
  double spawn_phi_deg = 30.0;
  double phi_star_deg = 60.0;

  agent::AgentConfig agent;  // hidden widths arrive via [nets]
  long long train_episodes = 1000;
  runner::TrainMode train_mode = runner::TrainMode::Sequential;
  long long checkpoint_every = 100;

  policies::BaselineConfig baselines;
  eval::EvalConfig evaluation;
};

// Parses and cross-checks the whole schema; unknown keys are errors.
RunConfig parse_run_config(const Table& table);

// Serializes every setting (TOML, fixed section order, shortest round-trip
// floats) so a run directory carries its exact configuration.
std::string resolved_toml(const RunConfig& cfg);

// Output root resolution: explicit value, else $VPOC_OUT, else "runs".
std::filesystem::path resolve_out_dir(const RunConfig& cfg);

env::EnvConfig env_config(const RunConfig& cfg);
dataset::CollectConfig collect_config(const RunConfig& cfg);
detector::GridTrainConfig grid_train_config(const RunConfig& cfg);

}  // namespace vpoc::config
