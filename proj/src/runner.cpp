#include "vpoc/runner.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::runner {

namespace {

constexpr int kSnapshotPublishEvery = 25;  // learner updates per publish

struct EpisodeStats {
  long long episode = 0;
  int steps = 0;
  double return_undiscounted = 0.0;
  double return_discounted = 0.0;
  double critic_loss_mean = 0.0;
};

void write_log_row(std::ofstream& log, const EpisodeStats& s) {
  nlohmann::json row;
  row["episode"] = s.episode;
  row["steps"] = s.steps;
  row["return_undiscounted"] = s.return_undiscounted;
  row["return_discounted"] = s.return_discounted;
  row["critic_loss_mean"] = s.critic_loss_mean;
  log << row.dump() << "\n";
  if (!log) throw StorageError("training log write failed");
}

std::filesystem::path cadence_checkpoint_path(
    const std::filesystem::path& out_dir, long long episodes_done) {
  return out_dir / ("checkpoint_ep" + std::to_string(episodes_done) + ".ckpt");
}

// Losses produced by the learner thread, drained per episode by the actor
// thread for logging.
struct LossAccumulator {
  std::mutex mu;
  double sum = 0.0;
  long long count = 0;

  void add(double loss) {
    std::lock_guard<std::mutex> lock(mu);
    sum += loss;
    ++count;
  }
  double drain_mean() {
    std::lock_guard<std::mutex> lock(mu);
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    sum = 0.0;
    count = 0;
    return mean;
  }
};

// Immutable actor-parameter versions published learner -> actor.
class SnapshotSlot {
 public:
  void publish(std::shared_ptr<const nets::Network<float>> net) {
    std::lock_guard<std::mutex> lock(mu_);
    net_ = std::move(net);
  }
  std::shared_ptr<const nets::Network<float>> get() const {
    std::lock_guard<std::mutex> lock(mu_);
    return net_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const nets::Network<float>> net_;
};

}  // namespace

void TrainConfig::validate() const {
  if (episodes < 0) throw ConfigError("episode count must be non-negative");
  if (out_dir.empty()) throw ConfigError("training needs an output directory");
}

std::uint64_t episode_plant_seed(std::uint64_t seed, long long episode) {
  return rng::derive(seed, "episode-plant",
                     static_cast<std::uint64_t>(episode));
}

TrainResult run_training(env::Environment& environment, agent::Agent& agent,
                         const TrainConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const auto log_path = cfg.out_dir / "train_log.jsonl";
  std::ofstream log(log_path, cfg.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw StorageError("cannot open " + log_path.string());

  const long long start_ep = cfg.resume ? agent.episodes_completed() : 0;
  const int warmup = agent.config().warmup;
  const double gamma = agent.config().gamma;
  const auto t0 = std::chrono::steady_clock::now();

  auto run_episode = [&](long long ep, auto&& act_fn, auto&& post_step) {
    const auto& first = environment.reset(episode_plant_seed(cfg.seed, ep));
    agent.reset_noise();
    env::Observation obs = first;
    EpisodeStats stats;
    stats.episode = ep;
    std::vector<double> rewards;
    while (!environment.done()) {
      const env::Action a = act_fn(obs);
      env::Transition tr = environment.step(a);
      obs = tr.next_obs;
      rewards.push_back(tr.reward);
      agent.store(std::move(tr));
      post_step();
    }
    stats.steps = static_cast<int>(rewards.size());
    for (double r : rewards) stats.return_undiscounted += r;
    stats.return_discounted = env::discounted_return(rewards, gamma);
    return stats;
  };

  TrainResult result;
  if (cfg.mode == TrainMode::Sequential) {
    for (long long ep = start_ep; ep < cfg.episodes; ++ep) {
      double loss_sum = 0.0;
      long long loss_count = 0;
      // One update per environment step once warm-up has filled the buffer.
      EpisodeStats stats = run_episode(
          ep, [&](const env::Observation& obs) { return agent.act(obs, true); },
          [&] {
            if (agent.buffer().total_pushed() <
                static_cast<std::uint64_t>(warmup))
              return;
            if (const auto d = agent.train_step()) {
              loss_sum += d->critic_loss;
              ++loss_count;
            }
          });
      stats.critic_loss_mean =
          loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
      write_log_row(log, stats);
      ++result.episodes_run;
      agent.set_episodes_completed(ep + 1);
      if (cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0)
        agent.save(cadence_checkpoint_path(cfg.out_dir, ep + 1));
    }
  } else {
    SnapshotSlot slot;
    slot.publish(agent.snapshot_actor());
    LossAccumulator losses;
    std::atomic<bool> stop{false};
    std::atomic<long long> episodes_done{start_ep};
    std::exception_ptr learner_error;

    std::thread learner([&] {
      try {
        long long since_publish = 0;
        long long checkpointed = start_ep;
        while (!stop.load(std::memory_order_acquire)) {
          const long long done = episodes_done.load(std::memory_order_acquire);
          if (cfg.checkpoint_every > 0 &&
              done - checkpointed >= cfg.checkpoint_every) {
            checkpointed = done - done % cfg.checkpoint_every;
            agent.set_episodes_completed(checkpointed);
            agent.save(cadence_checkpoint_path(cfg.out_dir, checkpointed));
          }
          if (agent.buffer().total_pushed() <
              static_cast<std::uint64_t>(warmup)) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            continue;
          }
          const auto d = agent.train_step();
          if (!d) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            continue;
          }
          losses.add(d->critic_loss);
          if (++since_publish >= kSnapshotPublishEvery) {
            since_publish = 0;
            slot.publish(agent.snapshot_actor());
          }
        }
      } catch (...) {
        learner_error = std::current_exception();
        stop.store(true, std::memory_order_release);
      }
    });

    try {
      for (long long ep = start_ep;
           ep < cfg.episodes && !stop.load(std::memory_order_acquire); ++ep) {
        EpisodeStats stats = run_episode(
            ep,
            [&](const env::Observation& o) {
              const auto snap = slot.get();
              return agent.act_with(*snap, o, true);
            },
            [] {});
        stats.critic_loss_mean = losses.drain_mean();
        write_log_row(log, stats);
        ++result.episodes_run;
        episodes_done.store(ep + 1, std::memory_order_release);
      }
    } catch (...) {
      stop.store(true, std::memory_order_release);
      learner.join();
      throw;
    }
    stop.store(true, std::memory_order_release);
    learner.join();
    if (learner_error) std::rethrow_exception(learner_error);
    agent.set_episodes_completed(
        episodes_done.load(std::memory_order_acquire));
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  result.log_path = log_path;
  result.final_checkpoint = cfg.out_dir / "checkpoint_final.ckpt";
  agent.save(result.final_checkpoint);

  // Wall-clock timing lives here rather than in the per-episode log so the
  // log stays byte-identical across reruns of the same seed.
  nlohmann::json summary;
  summary["episodes"] = agent.episodes_completed();
  summary["env_steps"] = agent.env_steps();
  summary["train_steps"] = agent.train_steps();
  summary["wall_clock_seconds"] = result.wall_seconds;
  summary["mode"] =
      cfg.mode == TrainMode::Sequential ? "sequential" : "parallel";
  std::ofstream sf(cfg.out_dir / "train_summary.json");
  if (!sf) throw StorageError("cannot write training summary");
  sf << summary.dump(2) << "\n";
  return result;
}

}  // namespace vpoc::runner
