// Command-line front end: dataset collection, detector training and
// evaluation, agent training, policy evaluation, and chart generation.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpoc/config.hpp"
#include "vpoc/errors.hpp"

namespace fs = std::filesystem;
using namespace vpoc;

namespace {

// 0 success, 2 config/usage, 3 I/O, 4 missing artifact, 5 bad checkpoint.
struct ExitWith {
  int code;
  std::string message;
};

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "TOML configuration file");
  cmd->add_option("--set", opts.sets,
                  "Override one setting, e.g. --set agent.gamma=0.95");
  cmd->add_option("--seed", opts.seed, "Global seed");
  cmd->add_option("--out", opts.out, "Output root directory");
}

config::RunConfig load_config(const CommonOpts& opts,
                              const std::vector<std::string>& extra_sets) {
  config::Table table;
  if (!opts.config_path.empty())
    table = config::load_toml_file(opts.config_path);
  for (const auto& s : opts.sets) config::apply_override(table, s);
  for (const auto& s : extra_sets) config::apply_override(table, s);
  if (opts.seed) {
    config::Value v;
    v.kind = config::Value::Kind::Int;
    v.i = *opts.seed;
    table["seed"] = v;
  }
  if (opts.out) {
    config::Value v;
    v.kind = config::Value::Kind::String;
    v.s = *opts.out;
    table["out_dir"] = v;
  }
  return config::parse_run_config(table);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw StorageError("short write: " + path.string());
}

fs::path prepare_run_dir(const config::RunConfig& cfg,
                         const std::string& name) {
  const fs::path dir = config::resolve_out_dir(cfg) / name;
  std::filesystem::create_directories(dir);
  write_text(dir / "config_resolved.toml", config::resolved_toml(cfg));
  return dir;
}

void require_artifact(const fs::path& p, const std::string& what) {
  if (!fs::exists(p))
    throw ExitWith{4, "missing " + what + ": " + p.string()};
}

detector::GridParams load_grid_artifact(const fs::path& out_root) {
  const fs::path path = out_root / "detector" / "grid.ckpt";
  require_artifact(path, "trained grid detector");
  return detector::load_grid(path);
}

int cmd_collect(const config::RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "dataset");
  const auto collect_cfg = config::collect_config(cfg);
  const auto frames = dataset::collect(collect_cfg);
  dataset::save_dataset(dir, frames);

  nlohmann::json manifest;
  manifest["frames"] = frames.size();
  manifest["plants"] = collect_cfg.num_plants;
  manifest["views"] = collect_cfg.num_views;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(
                    rng::hash_string(config::resolved_toml(cfg))));
  manifest["config_hash"] = hash;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("collected %zu frames into %s\n", frames.size(),
              dir.string().c_str());
  return 0;
}

int cmd_train_detector(const config::RunConfig& cfg) {
  const fs::path root = config::resolve_out_dir(cfg);
  require_artifact(root / "dataset" / "annotations.jsonl", "dataset");
  const auto frames = dataset::load_dataset(root / "dataset");
  const auto [train_set, val_set] = dataset::split(
      frames, cfg.dataset_train_fraction,
      static_cast<std::uint64_t>(cfg.seed));

  const auto params =
      detector::train_grid(train_set, cfg.occlusion,
                           config::grid_train_config(cfg),
                           cfg.grid.grid_size);
  const fs::path dir = prepare_run_dir(cfg, "detector");
  detector::save_grid(dir / "grid.ckpt", params);
  std::printf("trained grid detector on %zu frames (%zu held out) -> %s\n",
              train_set.size(), val_set.size(),
              (dir / "grid.ckpt").string().c_str());
  return 0;
}

int cmd_eval_detector(const config::RunConfig& cfg) {
  const fs::path root = config::resolve_out_dir(cfg);
  require_artifact(root / "dataset" / "annotations.jsonl", "dataset");
  const auto frames = dataset::load_dataset(root / "dataset");
  const auto [train_set, val_set] = dataset::split(
      frames, cfg.dataset_train_fraction,
      static_cast<std::uint64_t>(cfg.seed));
  (void)train_set;

  detector::DetectFn fn;
  std::string kind;
  if (cfg.detector_kind == env::DetectorKind::Oracle) {
    kind = "oracle";
    fn = detector::make_oracle_fn(cfg.oracle, cfg.generator, cfg.camera);
  } else {
    kind = "grid";
    fn = detector::make_grid_fn(load_grid_artifact(root), cfg.grid);
  }
  const auto rows =
      detector::pr_curve(val_set, fn, detector::default_iou_grid(),
                         detector::default_conf_grid());
  const fs::path dir = prepare_run_dir(cfg, "detector");
  detector::write_pr_csv(dir / ("pr_" + kind + ".csv"), rows);
  write_text(dir / ("pr_" + kind + ".svg"), detector::pr_curve_svg(rows));
  const auto& op = detector::pr_at(rows, 0.5, 0.6);
  std::printf(
      "%s detector on %zu held-out frames: precision %.3f recall %.3f at "
      "IOU 0.5, conf 0.6\n",
      kind.c_str(), val_set.size(), op.precision, op.recall);
  return 0;
}

int cmd_train(const config::RunConfig& cfg, bool resume,
              const std::string& mode_flag) {
  auto env_cfg = config::env_config(cfg);
  const fs::path root = config::resolve_out_dir(cfg);
  std::optional<detector::GridParams> grid;
  if (cfg.detector_kind == env::DetectorKind::Grid)
    grid = load_grid_artifact(root);
  env::Environment environment =
      grid ? env::Environment(env_cfg, *grid) : env::Environment(env_cfg);

  agent::Agent ag(env_cfg, cfg.agent,
                  static_cast<std::uint64_t>(cfg.seed));
  const fs::path dir = prepare_run_dir(cfg, "train");
  if (resume) {
    const fs::path ckpt = dir / "checkpoint_final.ckpt";
    require_artifact(ckpt, "checkpoint to resume from");
    ag.load(ckpt);
  }

  runner::TrainConfig tc;
  tc.episodes = cfg.train_episodes;
  tc.mode = cfg.train_mode;
  if (!mode_flag.empty()) {
    if (mode_flag == "sequential") tc.mode = runner::TrainMode::Sequential;
    else if (mode_flag == "parallel") tc.mode = runner::TrainMode::Parallel;
    else throw ConfigError("--mode must be sequential or parallel");
  }
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.seed = static_cast<std::uint64_t>(cfg.seed);
  tc.out_dir = dir;
  tc.resume = resume;
  const auto result = runner::run_training(environment, ag, tc);
  std::printf("trained %lld episodes (%.1fs) -> %s\n", result.episodes_run,
              result.wall_seconds, result.final_checkpoint.string().c_str());
  return 0;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& policy_name,
             const std::string& checkpoint) {
  const auto kind = policies::parse_policy_kind(policy_name);
  auto env_cfg = config::env_config(cfg);
  const fs::path root = config::resolve_out_dir(cfg);
  std::optional<detector::GridParams> grid;
  if (cfg.detector_kind == env::DetectorKind::Grid)
    grid = load_grid_artifact(root);

  std::shared_ptr<agent::Agent> ag;
  if (policies::policy_needs_actor(kind)) {
    if (checkpoint.empty())
      throw ConfigError("--checkpoint is required for policy " + policy_name);
    require_artifact(checkpoint, "agent checkpoint");
    ag = std::make_shared<agent::Agent>(env_cfg, cfg.agent,
                                        static_cast<std::uint64_t>(cfg.seed));
    ag->load(checkpoint);
  }
  // The greedy actor path is read-only, so sharing it across episode
  // workers is safe.
  policies::ActorFn actor;
  if (ag) actor = [ag](const env::Observation& o) { return ag->act(o, false); };

  const auto make_policy = [&](std::uint64_t policy_seed) {
    return policies::PolicyRunner(kind, cfg.baselines, cfg.workspace,
                                  policy_seed, actor);
  };
  const auto records =
      eval::evaluate(env_cfg, grid ? &*grid : nullptr, make_policy,
                     cfg.evaluation);
  const auto summary = eval::summarize(policy_name, records);

  const fs::path dir = prepare_run_dir(cfg, "eval/" + policy_name);
  eval::write_records_jsonl(dir / "records.jsonl", policy_name, records,
                            cfg.evaluation.fixation);
  eval::write_summary_csv(dir / "summary.csv", {summary});
  const int n_plots = std::min<int>(3, static_cast<int>(records.size()));
  for (int i = 0; i < n_plots; ++i) {
    const auto sc =
        scene::generate_plant(records[static_cast<std::size_t>(i)].plant_seed,
                              cfg.generator);
    write_text(dir / ("trajectory_" + std::to_string(i) + ".svg"),
               eval::plot_trajectory(records[static_cast<std::size_t>(i)], sc,
                                     cfg.workspace,
                                     cfg.generator.plant_radius));
  }
  int high = 0, low = 0, none = 0, unlabeled = 0;
  for (const auto& r : records) {
    const auto label = eval::classify_fixation(r, cfg.evaluation.fixation);
    if (!label) ++unlabeled;
    else if (*label == eval::FixationLabel::HighReturnFixation) ++high;
    else if (*label == eval::FixationLabel::LowReturnFixation) ++low;
    else ++none;
  }
  std::printf(
      "%s: mean return %.3f (sd %.3f) over %d episodes; %lld rewarded, "
      "mean steps to reward %.1f\n",
      policy_name.c_str(), summary.mean_return, summary.sd_return,
      summary.n_episodes, summary.n_rewarded, summary.mean_steps_to_reward);
  std::printf(
      "fixation: %d high-return, %d low-return, %d none, %d too short\n",
      high, low, none, unlabeled);
  return 0;
}

int cmd_plot(const config::RunConfig& cfg) {
  const fs::path root = config::resolve_out_dir(cfg);
  const fs::path eval_root = root / "eval";
  require_artifact(eval_root, "evaluation results");
  std::vector<eval::Summary> rows;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(eval_root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    const fs::path csv = d / "summary.csv";
    if (!fs::exists(csv)) continue;
    for (auto& s : eval::read_summary_csv(csv)) rows.push_back(std::move(s));
  }
  if (rows.empty())
    throw ExitWith{4, "no summary.csv files under " + eval_root.string()};
  const fs::path dir = root / "plots";
  fs::create_directories(dir);
  write_text(dir / "summary_charts.svg", eval::plot_summary(rows));
  std::printf("combined %zu policy summaries -> %s\n", rows.size(),
              (dir / "summary_charts.svg").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated viewpoint-optimization pipeline"};
  app.require_subcommand(1);

  CommonOpts collect_opts, traindet_opts, evaldet_opts, train_opts,
      eval_opts, plot_opts;

  auto* collect = app.add_subcommand("collect", "Render an annotated dataset");
  add_common(collect, collect_opts);
  std::optional<long long> num_plants, num_views;
  std::optional<long long> collect_workers;
  collect->add_option("--num-plants", num_plants, "Plants to generate");
  collect->add_option("--num-views", num_views, "Views per plant");
  collect->add_option("--workers", collect_workers, "Render workers");

  auto* traindet =
      app.add_subcommand("train-detector", "Fit the grid detector");
  add_common(traindet, traindet_opts);

  auto* evaldet = app.add_subcommand(
      "eval-detector", "Precision/recall curves on the held-out split");
  add_common(evaldet, evaldet_opts);

  auto* train = app.add_subcommand("train", "Train the agent");
  add_common(train, train_opts);
  std::optional<long long> train_episodes;
  std::string train_mode;
  bool resume = false;
  train->add_option("--episodes", train_episodes, "Training episodes");
  train->add_option("--mode", train_mode,
                    "Training concurrency: sequential or parallel");
  train->add_flag("--resume", resume, "Continue from the latest checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy");
  add_common(eval_cmd, eval_opts);
  std::string policy = "random";
  std::string checkpoint;
  std::optional<long long> eval_episodes, eval_workers;
  eval_cmd
      ->add_option("--policy", policy,
                   "random|random-ba|downward|frozen|proportional|ddpg|hybrid")
      ->required();
  eval_cmd->add_option("--checkpoint", checkpoint,
                       "Agent checkpoint (ddpg/hybrid)");
  eval_cmd->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval_cmd->add_option("--workers", eval_workers, "Evaluation workers");

  auto* plot = app.add_subcommand("plot", "Combine policy summaries");
  add_common(plot, plot_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (collect->parsed()) {
      std::vector<std::string> extra;
      if (num_plants)
        extra.push_back("dataset.num_plants=" + std::to_string(*num_plants));
      if (num_views)
        extra.push_back("dataset.num_views=" + std::to_string(*num_views));
      if (collect_workers)
        extra.push_back("dataset.workers=" + std::to_string(*collect_workers));
      return cmd_collect(load_config(collect_opts, extra));
    }
    if (traindet->parsed())
      return cmd_train_detector(load_config(traindet_opts, {}));
    if (evaldet->parsed())
      return cmd_eval_detector(load_config(evaldet_opts, {}));
    if (train->parsed()) {
      std::vector<std::string> extra;
      if (train_episodes)
        extra.push_back("agent.episodes=" + std::to_string(*train_episodes));
      return cmd_train(load_config(train_opts, extra), resume, train_mode);
    }
    if (eval_cmd->parsed()) {
      std::vector<std::string> extra;
      if (eval_episodes)
        extra.push_back("eval.episodes=" + std::to_string(*eval_episodes));
      if (eval_workers)
        extra.push_back("eval.workers=" + std::to_string(*eval_workers));
      return cmd_eval(load_config(eval_opts, extra), policy, checkpoint);
    }
    if (plot->parsed()) return cmd_plot(load_config(plot_opts, {}));
  } catch (const ExitWith& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "incompatible checkpoint: %s\n", e.what());
    return 5;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 3;
  } catch (const StorageError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
